//! Scripted replies that drive the pipeline without a model: each stage
//! gets the minimal faithful answer, so the emitted repository is the
//! notebook's own code in the fallback layout. Useful as a smoke test, as
//! a determinism fixture, and as a template for hand-written scripts.

use crate::agents::structure::synthesize_content;
use crate::agents::{fallback_plan, FilePlan};
use crate::graph::DependencyGraph;
use crate::llm::{BackendScript, ScriptStep};

/// The package name identity runs emit under `src/`.
pub const IDENTITY_ROOT: &str = "notebook";

/// Builds a script that answers every stage request for `graph` with an
/// identity transformation: a one-decision ADR per cell, each cell echoed
/// back unchanged, the fallback file plan, and one population round that
/// writes every planned file.
///
/// The script's shape is tied to the stage order: ADRs and refactors are
/// requested in ascending cell order, then one plan request, then the
/// population conversation.
pub fn identity_script(graph: &DependencyGraph) -> BackendScript {
    let plan = fallback_plan(graph, IDENTITY_ROOT);
    let mut steps = Vec::new();

    for id in graph.ids() {
        steps.push(ScriptStep::text(&format!(
            "```adr\n{{\"decisions\": [{{\"title\": \"Keep cell {id} as written\", \
             \"description\": \"The cell is already a coherent unit; no structural \
             change is needed.\", \"parent_refs\": [], \"category\": \"other\"}}]}}\n```\n"
        )));
    }

    for id in graph.ids() {
        let source = graph.node(id).expect("id from graph").source.trim_end();
        steps.push(ScriptStep::text(&format!(
            "No changes needed.\n\n```python\n{source}\n```\n"
        )));
    }

    steps.push(fileplan_step(&plan));
    steps.push(population_step(graph, &plan));
    steps.push(ScriptStep::text("All planned files are written."));

    BackendScript::new(steps)
}

fn fileplan_step(plan: &FilePlan) -> ScriptStep {
    ScriptStep::text(&format!(
        "```fileplan\n{}\n```\n",
        serde_json::to_string_pretty(plan).expect("plan serializes")
    ))
}

fn population_step(graph: &DependencyGraph, plan: &FilePlan) -> ScriptStep {
    let tool_calls = plan
        .entries
        .keys()
        .map(|path| {
            ScriptStep::call(
                "write_file",
                serde_json::json!({
                    "path": path,
                    "content": synthesize_content(graph, plan, path),
                }),
            )
        })
        .collect();
    ScriptStep {
        content: String::new(),
        tool_calls,
    }
}
