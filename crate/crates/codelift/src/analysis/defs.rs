//! Top-level definition extraction: which functions, classes, and
//! variables a module defines directly at module depth, with the exact
//! source span of each definition. The structure stage uses these to
//! place code into files and to collapse duplicate definitions.

use rustpython_parser::ast::{self, Ranged};
use rustpython_parser::text_size::TextRange;

use super::syntax::{parse_module, LineIndex, SyntaxDiagnosis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DefKind {
    Function,
    Class,
    Assignment,
}

/// One top-level definition. Lines are 1-based and inclusive; the span of
/// a decorated function or class starts at its first decorator.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Definition {
    pub name: String,
    pub kind: DefKind,
    pub start_line: usize,
    pub end_line: usize,
    /// The exact source lines of the definition, without a trailing
    /// newline.
    pub source_slice: String,
}

/// Lists the definitions a module makes at top level, in source order.
/// A name assigned several times appears once per occurrence. Definitions
/// nested inside `if`/`for`/`try`/function bodies are not included.
pub fn extract_definitions(source: &str) -> Result<Vec<Definition>, SyntaxDiagnosis> {
    let body = parse_module(source)?;
    let index = LineIndex::new(source);
    let mut defs = Vec::new();

    for stmt in &body {
        match stmt {
            ast::Stmt::FunctionDef(s) => defs.push(definition(
                source,
                &index,
                s.name.as_str(),
                DefKind::Function,
                span_with_decorators(stmt.range(), &s.decorator_list),
            )),
            ast::Stmt::AsyncFunctionDef(s) => defs.push(definition(
                source,
                &index,
                s.name.as_str(),
                DefKind::Function,
                span_with_decorators(stmt.range(), &s.decorator_list),
            )),
            ast::Stmt::ClassDef(s) => defs.push(definition(
                source,
                &index,
                s.name.as_str(),
                DefKind::Class,
                span_with_decorators(stmt.range(), &s.decorator_list),
            )),
            ast::Stmt::Assign(s) => {
                for target in &s.targets {
                    for name in target_name_list(target) {
                        defs.push(definition(
                            source,
                            &index,
                            &name,
                            DefKind::Assignment,
                            stmt.range(),
                        ));
                    }
                }
            }
            ast::Stmt::AnnAssign(s) if s.value.is_some() => {
                if let ast::Expr::Name(name) = s.target.as_ref() {
                    defs.push(definition(
                        source,
                        &index,
                        name.id.as_str(),
                        DefKind::Assignment,
                        stmt.range(),
                    ));
                }
            }
            _ => {}
        }
    }

    Ok(defs)
}

fn span_with_decorators(range: TextRange, decorators: &[ast::Expr]) -> TextRange {
    let start = decorators
        .iter()
        .map(|d| d.range().start())
        .min()
        .map_or(range.start(), |dec_start| dec_start.min(range.start()));
    TextRange::new(start, range.end())
}

fn definition(
    source: &str,
    index: &LineIndex,
    name: &str,
    kind: DefKind,
    range: TextRange,
) -> Definition {
    let start_offset = usize::from(range.start());
    let end_offset = usize::from(range.end()).min(source.len());
    let start_line = index.line_of(start_offset);
    let end_line = index.line_of(end_offset.saturating_sub(1).max(start_offset));

    let slice_start = index.line_start(start_line);
    let slice_end = if end_line < index.line_count() {
        index.line_start(end_line + 1)
    } else {
        source.len()
    };
    let source_slice = source[slice_start..slice_end]
        .trim_end_matches('\n')
        .to_string();

    Definition {
        name: name.to_string(),
        kind,
        start_line,
        end_line,
        source_slice,
    }
}

fn target_name_list(target: &ast::Expr) -> Vec<String> {
    match target {
        ast::Expr::Name(name) => vec![name.id.to_string()],
        ast::Expr::Tuple(t) => t.elts.iter().flat_map(target_name_list).collect(),
        ast::Expr::List(l) => l.elts.iter().flat_map(target_name_list).collect(),
        ast::Expr::Starred(s) => target_name_list(&s.value),
        _ => Vec::new(),
    }
}
