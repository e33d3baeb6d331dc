//! Architect stage: one pass over the graph in cell order, asking the
//! model for architecture decision records (ADRs) that later stages use
//! as refactoring guidance.

use std::collections::BTreeSet;

use serde_json::Value;

use crate::graph::DependencyGraph;
use crate::llm::{ChatBackend, ChatMessage};
use crate::prompts;

use super::{AgentError, CellFailure, CellTranscript};

/// What a decision is mainly about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionCategory {
    Modularization,
    Naming,
    Dry,
    Separation,
    Other,
}

impl DecisionCategory {
    /// Maps a free-form category string; anything unrecognized lands in
    /// `Other`.
    pub fn from_label(label: &str) -> DecisionCategory {
        match label.trim().to_ascii_lowercase().as_str() {
            "modularization" => DecisionCategory::Modularization,
            "naming" => DecisionCategory::Naming,
            "dry" => DecisionCategory::Dry,
            "separation" => DecisionCategory::Separation,
            _ => DecisionCategory::Other,
        }
    }
}

/// A single architecture decision.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AdrDecision {
    pub title: String,
    pub description: String,
    /// Ancestor cells this decision builds on. Always a subset of the
    /// cell's actual ancestors.
    pub parent_refs: Vec<usize>,
    pub category: DecisionCategory,
}

/// The architect's output for one cell.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AdrRecord {
    pub cell_id: usize,
    pub decisions: Vec<AdrDecision>,
}

/// Why an ADR reply could not be used.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdrParseError {
    #[error("reply contains no ```adr block")]
    MissingBlock,
    #[error("adr block is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("adr block has no usable decisions")]
    NoDecisions,
}

/// Builds the architect prompt for one cell: the graph skeleton, every
/// ancestor cell's source, then the cell under consideration.
pub fn format_architect_prompt(
    graph: &DependencyGraph,
    cell_id: usize,
) -> Result<Vec<ChatMessage>, crate::graph::GraphError> {
    let node = graph.node(cell_id)?;
    let ancestors = graph.ancestors(cell_id)?;

    let mut user = String::new();
    user.push_str("Dependency graph skeleton:\n");
    user.push_str(&graph.skeleton());
    user.push('\n');
    for id in &ancestors {
        let ancestor = graph.node(*id)?;
        user.push_str(&format!("\n### cell {id}\n{}\n", ancestor.source));
    }
    user.push_str(&format!("\n### current cell {cell_id}\n{}\n", node.source));

    Ok(vec![
        ChatMessage::system(prompts::ARCHITECT_SYSTEM),
        ChatMessage::user(&user),
    ])
}

/// Extracts and sanitizes the ```adr block from a model reply.
///
/// Decisions with an empty title are dropped, unknown categories map to
/// `other`, and `parent_refs` outside the cell's ancestor set are removed;
/// each repair is reported as a warning. A reply with no block, invalid
/// JSON, or zero usable decisions is an error.
pub fn parse_adr(
    raw: &str,
    cell_id: usize,
    graph: &DependencyGraph,
) -> Result<(AdrRecord, Vec<String>), AdrParseError> {
    let block = fenced_block(raw, "adr").ok_or(AdrParseError::MissingBlock)?;
    let doc: Value =
        serde_json::from_str(&block).map_err(|e| AdrParseError::InvalidJson(e.to_string()))?;

    let ancestors: BTreeSet<usize> = graph
        .ancestors(cell_id)
        .map_err(|_| AdrParseError::NoDecisions)?;

    let raw_decisions = doc
        .get("decisions")
        .and_then(Value::as_array)
        .ok_or(AdrParseError::NoDecisions)?;

    let mut warnings = Vec::new();
    let mut decisions = Vec::new();
    for (i, entry) in raw_decisions.iter().enumerate() {
        let title = entry
            .get("title")
            .and_then(Value::as_str)
            .unwrap_or("")
            .trim()
            .to_string();
        if title.is_empty() {
            warnings.push(format!("decision {i} dropped: missing or empty title"));
            continue;
        }
        let description = entry
            .get("description")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        let category_label = entry.get("category").and_then(Value::as_str).unwrap_or("");
        let category = DecisionCategory::from_label(category_label);
        let normalized = category_label.trim().to_ascii_lowercase();
        if category == DecisionCategory::Other && !normalized.is_empty() && normalized != "other" {
            warnings.push(format!(
                "decision {i}: unknown category `{category_label}` mapped to other"
            ));
        }

        let mut parent_refs = Vec::new();
        if let Some(refs) = entry.get("parent_refs").and_then(Value::as_array) {
            for r in refs {
                match r.as_u64().map(|v| v as usize) {
                    Some(id) if ancestors.contains(&id) => parent_refs.push(id),
                    Some(id) => warnings.push(format!(
                        "decision {i}: parent_ref {id} is not an ancestor of cell {cell_id}; dropped"
                    )),
                    None => warnings.push(format!(
                        "decision {i}: non-integer parent_ref dropped"
                    )),
                }
            }
        }
        parent_refs.sort_unstable();
        parent_refs.dedup();

        decisions.push(AdrDecision {
            title,
            description,
            parent_refs,
            category,
        });
    }

    if decisions.is_empty() {
        return Err(AdrParseError::NoDecisions);
    }
    Ok((AdrRecord { cell_id, decisions }, warnings))
}

/// Output of the architect stage.
#[derive(Debug)]
pub struct ArchitectRun {
    pub transcripts: Vec<CellTranscript>,
    /// Sanitizer warnings, flattened across cells.
    pub warnings: Vec<String>,
}

/// Runs the architect over every cell in ascending id order, storing an
/// ADR on each node. A reply that cannot be parsed gets one corrective
/// retry; a second failure aborts the stage.
pub fn run_architect(
    graph: &mut DependencyGraph,
    backend: &mut dyn ChatBackend,
) -> Result<ArchitectRun, AgentError> {
    let ids = graph.ids();
    if ids.iter().any(|&id| graph.node(id).unwrap().adr.is_some()) {
        return Err(AgentError::StageOrder {
            detail: "architect already ran: a node has an ADR".to_string(),
        });
    }

    let mut transcripts = Vec::new();
    let mut all_warnings = Vec::new();

    for id in ids {
        let mut messages = format_architect_prompt(graph, id).expect("node id from graph");
        let reply = backend
            .chat(&messages, &[])
            .map_err(|e| AgentError::cell(id, CellFailure::Backend(e)))?;
        messages.push(reply.clone());

        let parsed = match parse_adr(&reply.content, id, graph) {
            Ok(ok) => ok,
            Err(first_err) => {
                // One corrective round: tell the model what was wrong.
                messages.push(ChatMessage::user(&format!(
                    "Your reply could not be used: {first_err}. Reply again with exactly \
                     one ```adr block containing {{\"decisions\": [...]}} as described."
                )));
                let retry = backend
                    .chat(&messages, &[])
                    .map_err(|e| AgentError::cell(id, CellFailure::Backend(e)))?;
                messages.push(retry.clone());
                parse_adr(&retry.content, id, graph)
                    .map_err(|e| AgentError::cell(id, CellFailure::Adr(e)))?
            }
        };

        let (record, warnings) = parsed;
        for w in &warnings {
            log::warn!("architect cell {id}: {w}");
        }
        all_warnings.extend(warnings.into_iter().map(|w| format!("cell {id}: {w}")));
        graph.set_adr(id, record).expect("adr slot checked empty");
        transcripts.push(CellTranscript {
            cell_id: Some(id),
            label: "architect".to_string(),
            messages,
        });
    }

    Ok(ArchitectRun {
        transcripts,
        warnings: all_warnings,
    })
}

/// Finds the first fenced block tagged `tag` and returns its body.
pub(crate) fn fenced_block(text: &str, tag: &str) -> Option<String> {
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        if line.trim() == format!("```{tag}") {
            let mut body = String::new();
            for inner in lines.by_ref() {
                if inner.trim() == "```" {
                    return Some(body);
                }
                body.push_str(inner);
                body.push('\n');
            }
            return None; // unterminated fence
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::ingest::CleanCell;
    use crate::llm::{BackendScript, ScriptBackend, ScriptStep};

    fn two_cell_graph() -> DependencyGraph {
        let cells = vec![
            CleanCell {
                index: 0,
                source: "x = 1".to_string(),
            },
            CleanCell {
                index: 1,
                source: "y = x + 1".to_string(),
            },
        ];
        build_graph(&cells).unwrap()
    }

    fn adr_reply(decisions: &str) -> String {
        format!("Thinking it over.\n\n```adr\n{{\"decisions\": {decisions}}}\n```\n")
    }

    #[test]
    fn fenced_block_picks_the_tagged_fence_only() {
        let text = "```python\ncode\n```\n```adr\n{\"a\": 1}\n```\n";
        assert_eq!(fenced_block(text, "adr").unwrap(), "{\"a\": 1}\n");
        assert!(fenced_block(text, "fileplan").is_none());
        assert!(fenced_block("```adr\nnever closed\n", "adr").is_none());
    }

    #[test]
    fn parse_adr_sanitizes_and_reports_each_repair() {
        let graph = two_cell_graph();
        let raw = adr_reply(
            r#"[
                {"title": "", "description": "dropped", "parent_refs": [], "category": "naming"},
                {"title": "Reuse x", "description": "pull from cell 0",
                 "parent_refs": [0, 5, 0, "zero"], "category": "Weird"}
            ]"#,
        );
        let (record, warnings) = parse_adr(&raw, 1, &graph).unwrap();
        assert_eq!(record.decisions.len(), 1);
        let decision = &record.decisions[0];
        assert_eq!(decision.title, "Reuse x");
        // Only real ancestors survive, deduplicated.
        assert_eq!(decision.parent_refs, vec![0]);
        assert_eq!(decision.category, DecisionCategory::Other);
        assert_eq!(warnings.len(), 4, "{warnings:?}");
    }

    #[test]
    fn parse_adr_rejects_unusable_replies() {
        let graph = two_cell_graph();
        assert_eq!(
            parse_adr("no block", 0, &graph).unwrap_err(),
            AdrParseError::MissingBlock
        );
        assert!(matches!(
            parse_adr("```adr\n{broken\n```\n", 0, &graph).unwrap_err(),
            AdrParseError::InvalidJson(_)
        ));
        assert_eq!(
            parse_adr(&adr_reply("[]"), 0, &graph).unwrap_err(),
            AdrParseError::NoDecisions
        );
        // All decisions dropped by sanitizing is as bad as none at all.
        assert_eq!(
            parse_adr(
                &adr_reply(r#"[{"title": " ", "category": "dry"}]"#),
                0,
                &graph
            )
            .unwrap_err(),
            AdrParseError::NoDecisions
        );
    }

    #[test]
    fn prompt_shows_ancestors_before_the_current_cell() {
        let graph = two_cell_graph();
        let messages = format_architect_prompt(&graph, 1).unwrap();
        assert_eq!(messages.len(), 2);
        let user = &messages[1].content;
        let ancestor_at = user.find("### cell 0").unwrap();
        let current_at = user.find("### current cell 1").unwrap();
        assert!(ancestor_at < current_at);
        assert!(user.contains("cell 0 [defines: x]"), "skeleton missing");
    }

    #[test]
    fn run_architect_stores_an_adr_per_cell() {
        let mut graph = two_cell_graph();
        let script = BackendScript::new(vec![
            ScriptStep::text(&adr_reply(
                r#"[{"title": "Name the constant", "description": "", "parent_refs": [], "category": "naming"}]"#,
            )),
            ScriptStep::text(&adr_reply(
                r#"[{"title": "Derive from x", "description": "", "parent_refs": [0], "category": "modularization"}]"#,
            )),
        ]);
        let mut backend = ScriptBackend::new(script, true);

        let run = run_architect(&mut graph, &mut backend).unwrap();

        assert!(run.warnings.is_empty());
        assert_eq!(run.transcripts.len(), 2);
        assert_eq!(run.transcripts[0].label, "architect");
        let adr = graph.node(1).unwrap().adr.as_ref().unwrap();
        assert_eq!(adr.cell_id, 1);
        assert_eq!(adr.decisions[0].parent_refs, vec![0]);
    }

    #[test]
    fn one_bad_reply_gets_a_corrective_retry() {
        let mut graph = two_cell_graph();
        let good = adr_reply(
            r#"[{"title": "Keep as is", "description": "", "parent_refs": [], "category": "other"}]"#,
        );
        let script = BackendScript::new(vec![
            ScriptStep::text("sorry, no block"),
            ScriptStep::text(&good),
            ScriptStep::text(&good),
        ]);
        let mut backend = ScriptBackend::new(script, true);

        let run = run_architect(&mut graph, &mut backend).unwrap();

        // Cell 0 took two replies (bad + corrected), cell 1 took one.
        assert_eq!(run.transcripts[0].messages.len(), 5);
        assert_eq!(run.transcripts[1].messages.len(), 3);
        assert!(graph.node(0).unwrap().adr.is_some());
    }

    #[test]
    fn two_bad_replies_fail_the_cell() {
        let mut graph = two_cell_graph();
        let script = BackendScript::new(vec![
            ScriptStep::text("nope"),
            ScriptStep::text("still nope"),
        ]);
        let mut backend = ScriptBackend::new(script, true);

        let err = run_architect(&mut graph, &mut backend).unwrap_err();
        assert!(matches!(
            err,
            AgentError::CellFailed {
                cell_id: 0,
                failure: CellFailure::Adr(AdrParseError::MissingBlock),
            }
        ));
    }

    #[test]
    fn rerunning_the_architect_is_refused() {
        let mut graph = two_cell_graph();
        graph
            .set_adr(
                0,
                AdrRecord {
                    cell_id: 0,
                    decisions: vec![],
                },
            )
            .unwrap();
        let mut backend = ScriptBackend::new(BackendScript::new(vec![]), true);
        let err = run_architect(&mut graph, &mut backend).unwrap_err();
        assert!(matches!(err, AgentError::StageOrder { .. }));
    }
}
