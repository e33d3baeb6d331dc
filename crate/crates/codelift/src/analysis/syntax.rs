//! Syntax validation and source-position bookkeeping.

use rustpython_parser::{ast, Parse};
use thiserror::Error;

/// A syntax error located in a cell source. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error, serde::Serialize)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxDiagnosis {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Checks whether `source` parses as a Python module. Empty source is
/// valid (an empty module).
pub fn check_syntax(source: &str) -> Result<(), SyntaxDiagnosis> {
    parse_module(source).map(|_| ())
}

/// Parses `source` into a module body, mapping parse failures to a
/// line/column diagnosis.
pub(crate) fn parse_module(source: &str) -> Result<Vec<ast::Stmt>, SyntaxDiagnosis> {
    ast::Suite::parse(source, "<cell>").map_err(|err| {
        let index = LineIndex::new(source);
        let offset = usize::from(err.offset).min(source.len());
        let (line, column) = index.locate(source, offset);
        SyntaxDiagnosis {
            line,
            column,
            message: err.error.to_string(),
        }
    })
}

/// Byte-offset to line/column mapping for one source string.
pub(crate) struct LineIndex {
    /// Byte offset at which each line starts; `line_starts[0] == 0`.
    line_starts: Vec<usize>,
}

impl LineIndex {
    pub(crate) fn new(source: &str) -> Self {
        let mut line_starts = vec![0];
        for (i, b) in source.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        LineIndex { line_starts }
    }

    /// Returns the 1-based line containing `offset`.
    pub(crate) fn line_of(&self, offset: usize) -> usize {
        self.line_starts.partition_point(|&start| start <= offset)
    }

    /// Returns the byte offset at which 1-based `line` starts.
    pub(crate) fn line_start(&self, line: usize) -> usize {
        self.line_starts[line - 1]
    }

    pub(crate) fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    /// Returns 1-based `(line, column)` for a byte offset; the column
    /// counts characters from the line start.
    pub(crate) fn locate(&self, source: &str, offset: usize) -> (usize, usize) {
        let line = self.line_of(offset);
        let start = self.line_start(line);
        let column = source[start..offset].chars().count() + 1;
        (line, column)
    }
}
