//! Developer stage: refactor each cell to follow its architecture
//! decisions, checking candidates with the `validation` tool and never
//! making a cell worse than it started.

use std::cell::RefCell;

use serde_json::json;

use crate::analysis::{validate_code, LintConfig, LintError, Score, ValidationReport};
use crate::graph::DependencyGraph;
use crate::llm::{run_tool_loop, ChatBackend, ChatMessage, LlmError, ToolRegistry};
use crate::prompts;

use super::{last_fenced_code_block, AgentError, CellFailure, CellTranscript};

/// Budget for one cell's refactoring conversation.
#[derive(Debug, Clone, Copy)]
pub struct DeveloperLimits {
    /// Maximum validation-tool rounds per cell.
    pub max_rounds: usize,
    /// The score at which a candidate is considered good enough; put in
    /// front of the model as the bar to clear.
    pub accept_score: Score,
}

impl Default for DeveloperLimits {
    fn default() -> Self {
        DeveloperLimits {
            max_rounds: 6,
            accept_score: Score::parse_decimal("8").expect("literal parses"),
        }
    }
}

/// What the developer did to one cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RefactorOutcome {
    pub cell_id: usize,
    /// The chosen source: the best valid candidate, or the original cell
    /// when nothing beat it.
    pub code: String,
    pub score: Score,
    pub initial_score: Score,
    /// Rounds consumed, counting the conversation itself as one.
    pub rounds_used: usize,
    /// True when no candidate was at least as good as the input and the
    /// original source was kept.
    pub kept_original: bool,
}

/// Builds the developer prompt for one cell: refactored ancestors, the
/// cell's source, then its architecture decisions.
pub fn format_developer_prompt(
    graph: &DependencyGraph,
    cell_id: usize,
) -> Result<Vec<ChatMessage>, AgentError> {
    let node = graph.node(cell_id)?;
    let adr = node
        .adr
        .as_ref()
        .ok_or_else(|| AgentError::cell(cell_id, CellFailure::MissingAdr))?;

    let mut user = String::new();
    for id in graph.ancestors(cell_id)? {
        let ancestor = graph.node(id)?;
        user.push_str(&format!(
            "### ancestor cell {id}\n{}\n\n",
            ancestor.current_source()
        ));
    }
    user.push_str(&format!("### current cell {cell_id}\n{}\n\n", node.source));
    user.push_str(&format!(
        "### architecture decisions\n{}\n",
        serde_json::to_string_pretty(&adr.decisions).expect("decisions serialize")
    ));

    Ok(vec![
        ChatMessage::system(prompts::DEVELOPER_SYSTEM),
        ChatMessage::user(&user),
    ])
}

/// Refactors one cell. Every source submitted to the `validation` tool
/// and the final reply's code block are candidates; the best
/// syntactically valid one wins (later candidates win ties), and the
/// original source is kept if nothing scores at least as well as it did.
pub fn refactor_cell(
    graph: &DependencyGraph,
    cell_id: usize,
    backend: &mut dyn ChatBackend,
    limits: &DeveloperLimits,
    lint: &LintConfig,
) -> Result<(RefactorOutcome, CellTranscript), AgentError> {
    let node = graph.node(cell_id)?;
    let initial = validate_code(&node.source, lint)?;

    let candidates: RefCell<Vec<(String, ValidationReport)>> = RefCell::new(Vec::new());
    let lint_failure: RefCell<Option<LintError>> = RefCell::new(None);

    let mut registry = ToolRegistry::new();
    registry.register(
        "validation",
        "Lint a candidate version of the cell. Returns a 0-10 score, whether the \
         code parses, and individual findings.",
        json!({
            "type": "object",
            "properties": {
                "code": { "type": "string", "description": "complete candidate source" }
            },
            "required": ["code"]
        }),
        Box::new(|args| {
            let code = args
                .get("code")
                .and_then(serde_json::Value::as_str)
                .ok_or("arguments must contain a string field `code`")?;
            match validate_code(code, lint) {
                Ok(report) => {
                    let wire = validation_wire(&report);
                    candidates.borrow_mut().push((code.to_string(), report));
                    Ok(wire)
                }
                Err(e) => {
                    *lint_failure.borrow_mut() = Some(e);
                    Err("validation unavailable".to_string())
                }
            }
        }),
    );

    let prompt = format_developer_prompt(graph, cell_id)?;
    let loop_result = run_tool_loop(backend, prompt, &mut registry, limits.max_rounds);
    drop(registry);

    if let Some(failure) = lint_failure.into_inner() {
        return Err(AgentError::cell(cell_id, CellFailure::Lint(failure)));
    }

    let (mut transcript, rounds_used, final_content) = match loop_result {
        Ok(outcome) => (
            outcome.transcript,
            outcome.rounds_used,
            Some(outcome.final_message.content),
        ),
        Err(loop_err) => match loop_err.error {
            // Budget exhausted: salvage the best candidate seen so far.
            LlmError::RoundLimitExceeded { limit } => (loop_err.transcript, limit, None),
            other => {
                return Err(AgentError::cell(cell_id, CellFailure::Backend(other)));
            }
        },
    };

    let mut candidates = candidates.into_inner();
    if let Some(content) = final_content {
        match last_fenced_code_block(&content) {
            Some(code) => {
                let report = validate_code(&code, lint)?;
                candidates.push((code, report));
            }
            None => {
                // One corrective round: ask for the block explicitly.
                transcript.push(ChatMessage::user(
                    "Reply with exactly one fenced code block containing the complete \
                     refactored cell source.",
                ));
                let retry = backend
                    .chat(&transcript, &[])
                    .map_err(|e| AgentError::cell(cell_id, CellFailure::Backend(e)))?;
                transcript.push(retry.clone());
                let code = last_fenced_code_block(&retry.content)
                    .ok_or_else(|| AgentError::cell(cell_id, CellFailure::NoCodeBlock))?;
                let report = validate_code(&code, lint)?;
                candidates.push((code, report));
            }
        }
    }

    // Best valid candidate; iteration order makes later ones win ties.
    let mut best: Option<(String, Score)> = None;
    for (code, report) in candidates {
        if !report.syntactically_valid {
            continue;
        }
        if best.as_ref().is_none_or(|(_, s)| report.score >= *s) {
            best = Some((code, report.score));
        }
    }

    let (code, score, kept_original) = match best {
        Some((code, score)) if score >= initial.score => (code, score, false),
        _ => {
            log::warn!(
                "developer cell {cell_id}: no candidate beat the original (score {}); keeping it",
                initial.score
            );
            (node.source.clone(), initial.score, true)
        }
    };

    Ok((
        RefactorOutcome {
            cell_id,
            code,
            score,
            initial_score: initial.score,
            rounds_used: rounds_used.max(1),
            kept_original,
        },
        CellTranscript {
            cell_id: Some(cell_id),
            label: "developer".to_string(),
            messages: transcript,
        },
    ))
}

/// The `validation` tool's wire result.
fn validation_wire(report: &ValidationReport) -> String {
    json!({
        "score": report.score.to_f64(),
        "valid": report.syntactically_valid,
        "messages": report.messages,
    })
    .to_string()
}

/// Output of the developer stage.
#[derive(Debug)]
pub struct DeveloperRun {
    pub outcomes: Vec<RefactorOutcome>,
    pub transcripts: Vec<CellTranscript>,
}

/// Runs the developer over every cell in ascending id order, storing each
/// result on the graph.
pub fn run_developer(
    graph: &mut DependencyGraph,
    backend: &mut dyn ChatBackend,
    limits: &DeveloperLimits,
    lint: &LintConfig,
) -> Result<DeveloperRun, AgentError> {
    let ids = graph.ids();
    for &id in &ids {
        let node = graph.node(id).expect("id from graph");
        if node.adr.is_none() {
            return Err(AgentError::StageOrder {
                detail: format!("cell {id} has no ADR; run the architect first"),
            });
        }
        if node.refactored.is_some() {
            return Err(AgentError::StageOrder {
                detail: format!("cell {id} is already refactored"),
            });
        }
    }

    let mut outcomes = Vec::new();
    let mut transcripts = Vec::new();
    for id in ids {
        let (outcome, transcript) = refactor_cell(graph, id, backend, limits, lint)?;
        graph
            .set_refactored(id, outcome.code.clone())
            .expect("slot checked empty");
        outcomes.push(outcome);
        transcripts.push(transcript);
    }

    Ok(DeveloperRun {
        outcomes,
        transcripts,
    })
}
