//! Static analysis of Python cell sources: syntax checking, def/use
//! binding extraction, top-level definition spans, and lint scoring.

mod bindings;
mod defs;
mod lint;
mod syntax;

pub use bindings::{extract_bindings, BindingSet, ImportPair};
pub use defs::{extract_definitions, DefKind, Definition};
pub use lint::{
    validate_code, LintConfig, LintError, LintMessage, Score, Severity, ValidationReport,
};
pub use syntax::{check_syntax, SyntaxDiagnosis};
