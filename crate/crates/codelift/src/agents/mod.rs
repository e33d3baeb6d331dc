//! The three pipeline stages — architect, developer, structure — and the
//! types they share. Stages run sequentially and communicate only through
//! the dependency graph and the emitted workspace.

pub mod architect;
pub mod developer;
pub mod structure;

pub use architect::{
    format_architect_prompt, parse_adr, run_architect, AdrDecision, AdrParseError, AdrRecord,
    ArchitectRun, DecisionCategory,
};
pub use developer::{
    format_developer_prompt, refactor_cell, run_developer, DeveloperLimits, DeveloperRun,
    RefactorOutcome,
};
pub use structure::{
    fallback_plan, parse_fileplan, plan_structure, populate, run_structure, FilePlan,
    FilePlanEntry, PopulateOutcome, StructureLimits, StructureRun, WorkspaceEvent, MANIFEST_FILE,
};

use crate::analysis::LintError;
use crate::graph::GraphError;
use crate::llm::{ChatMessage, LlmError};

/// A recorded conversation for one unit of stage work.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CellTranscript {
    /// The cell this conversation was about, when it was per-cell work.
    pub cell_id: Option<usize>,
    /// Which conversation this was: `architect`, `developer`,
    /// `fileplan`, `population`.
    pub label: String,
    pub messages: Vec<ChatMessage>,
}

/// Why one cell's stage work failed for good (after any retry).
#[derive(Debug, thiserror::Error)]
pub enum CellFailure {
    #[error("adr rejected after corrective retry: {0}")]
    Adr(#[from] AdrParseError),
    #[error("reply has no fenced code block, even after corrective retry")]
    NoCodeBlock,
    #[error("cell has no ADR; the architect stage must run first")]
    MissingAdr,
    #[error(transparent)]
    Backend(LlmError),
    #[error(transparent)]
    Lint(LintError),
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("cell {cell_id}: {failure}")]
    CellFailed {
        cell_id: usize,
        failure: CellFailure,
    },
    #[error("stage ran out of order: {detail}")]
    StageOrder { detail: String },
    #[error("file plan rejected: {detail}")]
    PlanInvalid { detail: String },
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Lint(#[from] LintError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("workspace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sandbox(#[from] crate::sandbox::SandboxError),
}

impl AgentError {
    pub(crate) fn cell(cell_id: usize, failure: CellFailure) -> AgentError {
        AgentError::CellFailed { cell_id, failure }
    }
}

/// Finds the last complete fenced code block in a reply (any language
/// tag) and returns its body. This is how stage answers embed code.
pub(crate) fn last_fenced_code_block(text: &str) -> Option<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match &mut current {
            None => {
                if trimmed.starts_with("```") {
                    current = Some(String::new());
                }
            }
            Some(body) => {
                if trimmed == "```" {
                    blocks.push(std::mem::take(body));
                    current = None;
                } else {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
    }
    blocks.pop()
}
