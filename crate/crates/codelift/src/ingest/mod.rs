//! Notebook ingestion: parse `.ipynb` JSON, then normalize code cells into
//! plain Python sources suitable for static analysis.

mod lexer;

pub use lexer::{LexWarning, RemovedMagic};

use serde_json::{json, Map, Value};
use thiserror::Error;

/// Errors raised while parsing a notebook document.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("notebook is not valid JSON: {0}")]
    MalformedJson(#[from] serde_json::Error),
    #[error("unsupported nbformat major version {found:?} (only 4 is supported)")]
    UnsupportedFormat { found: Option<u64> },
    #[error("missing or invalid field `{field}`{}", cell_context(.index))]
    MissingField {
        field: &'static str,
        index: Option<usize>,
    },
    #[error("cell {index} has unknown cell_type `{found}`")]
    UnknownCellType { index: usize, found: String },
}

fn cell_context(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" in cell {i}"),
        None => String::new(),
    }
}

/// The kind of a notebook cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
    Raw,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Code => "code",
            CellKind::Markdown => "markdown",
            CellKind::Raw => "raw",
        }
    }
}

/// A notebook cell with its source joined into one string.
#[derive(Debug, Clone, PartialEq)]
pub struct NotebookCell {
    /// Position of the cell in the notebook, counting every cell kind.
    pub index: usize,
    pub kind: CellKind,
    pub source: String,
    /// Raw output records, kept opaque. Always empty for non-code cells.
    pub outputs: Vec<Value>,
}

/// A parsed notebook document.
#[derive(Debug, Clone, PartialEq)]
pub struct Notebook {
    pub cells: Vec<NotebookCell>,
    /// `(nbformat, nbformat_minor)`.
    pub format_version: (u64, u64),
    pub metadata: Map<String, Value>,
}

impl Notebook {
    /// Renders the notebook back to nbformat-shaped JSON. Parsing the
    /// result yields the same cell list (kinds, sources, order).
    pub fn to_json(&self) -> Value {
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|cell| {
                let mut obj = Map::new();
                obj.insert("cell_type".into(), json!(cell.kind.as_str()));
                obj.insert("metadata".into(), json!({}));
                obj.insert("source".into(), json!(cell.source));
                if cell.kind == CellKind::Code {
                    obj.insert("execution_count".into(), Value::Null);
                    obj.insert("outputs".into(), Value::Array(cell.outputs.clone()));
                }
                Value::Object(obj)
            })
            .collect();
        json!({
            "nbformat": self.format_version.0,
            "nbformat_minor": self.format_version.1,
            "metadata": Value::Object(self.metadata.clone()),
            "cells": cells,
        })
    }
}

/// Parses an nbformat v4 notebook from raw bytes.
///
/// Cell sources stored as arrays of lines are joined as-is (nbformat keeps
/// the newlines in the fragments). Unknown cell-level fields are ignored.
pub fn parse_notebook(raw: &[u8]) -> Result<Notebook, IngestError> {
    let doc: Value = serde_json::from_slice(raw)?;

    let major = doc.get("nbformat").and_then(Value::as_u64);
    if major != Some(4) {
        return Err(IngestError::UnsupportedFormat { found: major });
    }
    let minor = doc.get("nbformat_minor").and_then(Value::as_u64).unwrap_or(0);
    let metadata = doc
        .get("metadata")
        .and_then(Value::as_object)
        .cloned()
        .unwrap_or_default();

    let raw_cells = doc
        .get("cells")
        .and_then(Value::as_array)
        .ok_or(IngestError::MissingField {
            field: "cells",
            index: None,
        })?;

    let mut cells = Vec::with_capacity(raw_cells.len());
    for (index, cell) in raw_cells.iter().enumerate() {
        let kind_str = cell
            .get("cell_type")
            .and_then(Value::as_str)
            .ok_or(IngestError::MissingField {
                field: "cell_type",
                index: Some(index),
            })?;
        let kind = match kind_str {
            "code" => CellKind::Code,
            "markdown" => CellKind::Markdown,
            "raw" => CellKind::Raw,
            other => {
                return Err(IngestError::UnknownCellType {
                    index,
                    found: other.to_string(),
                })
            }
        };
        let source = join_source(cell.get("source")).ok_or(IngestError::MissingField {
            field: "source",
            index: Some(index),
        })?;
        let outputs = if kind == CellKind::Code {
            cell.get("outputs")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default()
        } else {
            Vec::new()
        };
        cells.push(NotebookCell {
            index,
            kind,
            source,
            outputs,
        });
    }

    Ok(Notebook {
        cells,
        format_version: (4, minor),
        metadata,
    })
}

/// nbformat stores sources either as one string or as a list of line
/// fragments that already carry their newlines.
fn join_source(value: Option<&Value>) -> Option<String> {
    match value? {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let mut joined = String::new();
            for part in parts {
                joined.push_str(part.as_str()?);
            }
            Some(joined)
        }
        _ => None,
    }
}

/// A code cell after cleanup, ready for analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanCell {
    /// The cell's index in the original notebook.
    pub index: usize,
    pub source: String,
}

/// Something `clean_cells` did or noticed, tied to a cell index.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CleanEvent {
    MagicRemoved {
        cell: usize,
        line: usize,
        text: String,
    },
    UnterminatedString {
        cell: usize,
        line: usize,
    },
    EmptyCellDropped {
        cell: usize,
    },
}

impl std::fmt::Display for CleanEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CleanEvent::MagicRemoved { cell, line, text } => {
                write!(f, "cell {cell}: removed magic/shell line {line}: {text}")
            }
            CleanEvent::UnterminatedString { cell, line } => write!(
                f,
                "cell {cell}: unterminated string starting on line {line}; \
                 the rest of the cell was kept verbatim"
            ),
            CleanEvent::EmptyCellDropped { cell } => {
                write!(f, "cell {cell}: dropped (no code left after cleanup)")
            }
        }
    }
}

/// Output of [`clean_cells`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanOutcome {
    pub cells: Vec<CleanCell>,
    pub events: Vec<CleanEvent>,
}

/// Extracts code cells and normalizes them: magic/shell lines and comments
/// are removed, and cells that end up whitespace-only are dropped (with an
/// event recorded). Cell indices always refer back to the notebook.
pub fn clean_cells(notebook: &Notebook) -> CleanOutcome {
    let mut cells = Vec::new();
    let mut events = Vec::new();

    for cell in &notebook.cells {
        if cell.kind != CellKind::Code {
            continue;
        }
        let outcome = lexer::clean_source(&cell.source, true);
        for magic in &outcome.removed_magics {
            events.push(CleanEvent::MagicRemoved {
                cell: cell.index,
                line: magic.line,
                text: magic.text.clone(),
            });
        }
        for warning in &outcome.warnings {
            events.push(CleanEvent::UnterminatedString {
                cell: cell.index,
                line: warning.line,
            });
        }
        if outcome.text.trim().is_empty() {
            events.push(CleanEvent::EmptyCellDropped { cell: cell.index });
            continue;
        }
        cells.push(CleanCell {
            index: cell.index,
            source: outcome.text,
        });
    }

    CleanOutcome { cells, events }
}

/// Removes comments from Python source while leaving string literals
/// intact. Idempotent; the identity on sources with no `#` outside
/// strings. See [`strip_comments_detailed`] for the warning-carrying form.
pub fn strip_comments(source: &str) -> String {
    lexer::clean_source(source, false).text
}

/// Like [`strip_comments`] but also reports unterminated-string warnings.
pub fn strip_comments_detailed(source: &str) -> (String, Vec<LexWarning>) {
    let outcome = lexer::clean_source(source, false);
    (outcome.text, outcome.warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn notebook_json() -> Value {
        json!({
            "nbformat": 4,
            "nbformat_minor": 5,
            "metadata": {"kernelspec": {"name": "python3"}},
            "cells": [
                {
                    "cell_type": "markdown",
                    "metadata": {},
                    "source": ["# Title\n", "prose"]
                },
                {
                    "cell_type": "code",
                    "execution_count": 1,
                    "metadata": {},
                    "outputs": [{"output_type": "stream", "name": "stdout", "text": "hi\n"}],
                    "source": "%matplotlib inline\nimport math  # stdlib\n"
                },
                {
                    "cell_type": "code",
                    "execution_count": null,
                    "metadata": {},
                    "outputs": [],
                    "source": ["x = math.pi\n", "print(x)"]
                },
                {
                    "cell_type": "raw",
                    "metadata": {},
                    "source": "raw text"
                }
            ]
        })
    }

    #[test]
    fn parses_cells_with_joined_sources() {
        let raw = serde_json::to_vec(&notebook_json()).unwrap();
        let nb = parse_notebook(&raw).unwrap();
        assert_eq!(nb.format_version, (4, 5));
        assert_eq!(nb.cells.len(), 4);
        assert_eq!(nb.cells[0].kind, CellKind::Markdown);
        assert_eq!(nb.cells[0].source, "# Title\nprose");
        assert_eq!(nb.cells[1].kind, CellKind::Code);
        assert_eq!(nb.cells[1].outputs.len(), 1);
        assert_eq!(nb.cells[2].source, "x = math.pi\nprint(x)");
        assert_eq!(nb.cells[3].kind, CellKind::Raw);
        assert!(nb.cells[3].outputs.is_empty());
    }

    #[test]
    fn rejects_non_v4_notebooks() {
        let raw = serde_json::to_vec(&json!({"nbformat": 3, "cells": []})).unwrap();
        match parse_notebook(&raw) {
            Err(IngestError::UnsupportedFormat { found: Some(3) }) => {}
            other => panic!("expected UnsupportedFormat, got {other:?}"),
        }
    }

    #[test]
    fn rejects_cell_without_source() {
        let raw = serde_json::to_vec(&json!({
            "nbformat": 4,
            "cells": [{"cell_type": "code", "outputs": []}]
        }))
        .unwrap();
        match parse_notebook(&raw) {
            Err(IngestError::MissingField {
                field: "source",
                index: Some(0),
            }) => {}
            other => panic!("expected MissingField(source), got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(matches!(
            parse_notebook(b"{not json"),
            Err(IngestError::MalformedJson(_))
        ));
    }

    #[test]
    fn roundtrip_preserves_cell_list() {
        let raw = serde_json::to_vec(&notebook_json()).unwrap();
        let nb = parse_notebook(&raw).unwrap();
        let rendered = serde_json::to_vec(&nb.to_json()).unwrap();
        let again = parse_notebook(&rendered).unwrap();
        assert_eq!(nb.cells, again.cells);
    }

    #[test]
    fn clean_cells_strips_and_keeps_indices() {
        let raw = serde_json::to_vec(&notebook_json()).unwrap();
        let nb = parse_notebook(&raw).unwrap();
        let outcome = clean_cells(&nb);
        assert_eq!(outcome.cells.len(), 2);
        assert_eq!(outcome.cells[0].index, 1);
        assert_eq!(outcome.cells[0].source, "import math\n");
        assert_eq!(outcome.cells[1].index, 2);
        assert!(outcome
            .events
            .iter()
            .any(|e| matches!(e, CleanEvent::MagicRemoved { cell: 1, line: 1, .. })));
    }

    #[test]
    fn clean_cells_drops_cells_that_become_empty() {
        let raw = serde_json::to_vec(&json!({
            "nbformat": 4,
            "cells": [
                {"cell_type": "code", "outputs": [], "source": "# only a comment\n"},
                {"cell_type": "code", "outputs": [], "source": "%pwd"},
                {"cell_type": "code", "outputs": [], "source": "x = 1\n"}
            ]
        }))
        .unwrap();
        let nb = parse_notebook(&raw).unwrap();
        let outcome = clean_cells(&nb);
        assert_eq!(outcome.cells.len(), 1);
        assert_eq!(outcome.cells[0].index, 2);
        let dropped: Vec<usize> = outcome
            .events
            .iter()
            .filter_map(|e| match e {
                CleanEvent::EmptyCellDropped { cell } => Some(*cell),
                _ => None,
            })
            .collect();
        assert_eq!(dropped, vec![0, 1]);
    }
}
