//! End-to-end orchestration: notebook bytes in, repository out. The
//! pipeline is strictly staged — ingest, graph, architect, developer,
//! structure — and leaves an audit trail: per-stage artifacts under
//! `.codelift-stages/` and, on request, full conversation transcripts
//! under `.codelift-trace/`. Nothing here depends on wall-clock time or
//! iteration order of unordered maps, so a run is byte-reproducible given
//! the same notebook and backend replies.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agents::{
    plan_structure, populate, run_architect, run_developer, AgentError, CellTranscript,
};
use crate::config::{BackendChoice, RunConfig};
use crate::graph::{build_graph, export_graph, DependencyGraph, ExportFormat, GraphError};
use crate::ingest::{clean_cells, parse_notebook, CleanEvent, IngestError};
use crate::llm::{BackendScript, ChatBackend, HttpBackend, LlmError, ScriptBackend};

/// Directory (under the output root) for per-stage artifacts.
pub const STAGES_DIR: &str = ".codelift-stages";
/// Directory (under the output root) for conversation transcripts.
pub const TRACE_DIR: &str = ".codelift-trace";
/// Directory (under the output root) holding the emitted repository.
pub const REPO_DIR: &str = "repo";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("mock script `{path}` is not valid: {detail}")]
    BadScript { path: String, detail: String },
    #[error("output directory `{path}` is unusable: {detail}")]
    OutDirUnusable { path: String, detail: String },
    #[error("notebook has no code after cleanup")]
    EmptyNotebook,
}

/// What a successful run produced.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    /// The emitted repository (`<out>/repo`).
    pub repo_dir: PathBuf,
    /// Code cells that made it into the graph.
    pub cells: usize,
    /// Emitted repository files (manifest excluded), sorted.
    pub files: Vec<String>,
    /// Files enforcement had to create, replace, or extend because the
    /// model did not. Zero is a clean run.
    pub substitutions: usize,
    /// True when the model's file plan was rejected twice and the
    /// fallback layout was used.
    pub plan_fell_back: bool,
    /// Names collapsed to one definition plus imports.
    pub deduplicated: Vec<String>,
    /// Everything worth telling the user: cleanup events, ADR repairs,
    /// cells kept unrefactored.
    pub warnings: Vec<String>,
}

fn build_backend(choice: &BackendChoice) -> Result<Box<dyn ChatBackend>, PipelineError> {
    match choice {
        BackendChoice::Endpoint(config) => Ok(Box::new(HttpBackend::new(config)?)),
        BackendChoice::MockScript(path) => {
            let raw = fs::read_to_string(path)?;
            let script =
                BackendScript::from_json(&raw).map_err(|e| PipelineError::BadScript {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?;
            Ok(Box::new(ScriptBackend::new(script, true)))
        }
    }
}


/// Claims the output directory: it must not exist yet or be empty.
fn claim_out_dir(out: &Path) -> Result<(), PipelineError> {
    let unusable = |detail: String| PipelineError::OutDirUnusable {
        path: out.display().to_string(),
        detail,
    };
    if out.exists() {
        if !out.is_dir() {
            return Err(unusable("exists and is not a directory".to_string()));
        }
        if fs::read_dir(out)?.next().is_some() {
            return Err(unusable(
                "is not empty; refusing to mix runs".to_string(),
            ));
        }
    } else {
        fs::create_dir_all(out)?;
    }
    Ok(())
}

fn write_stage_artifact(stages: &Path, name: &str, content: &str) -> Result<(), PipelineError> {
    fs::write(stages.join(name), content)?;
    Ok(())
}

fn adr_artifact(graph: &DependencyGraph) -> String {
    let records: Vec<_> = graph.nodes().filter_map(|n| n.adr.as_ref()).collect();
    let mut text = serde_json::to_string_pretty(&records).expect("records serialize");
    text.push('\n');
    text
}

fn write_traces(
    trace_dir: &Path,
    transcripts: &[CellTranscript],
    events: &[crate::agents::WorkspaceEvent],
) -> Result<(), PipelineError> {
    fs::create_dir_all(trace_dir)?;
    for (i, transcript) in transcripts.iter().enumerate() {
        let suffix = transcript
            .cell_id
            .map(|id| format!("_cell_{id}"))
            .unwrap_or_default();
        let name = format!("{i:03}_{}{suffix}.json", transcript.label);
        let mut text =
            serde_json::to_string_pretty(&transcript.messages).expect("messages serialize");
        text.push('\n');
        fs::write(trace_dir.join(name), text)?;
    }
    let mut text = serde_json::to_string_pretty(events).expect("events serialize");
    text.push('\n');
    fs::write(trace_dir.join("workspace_events.json"), text)?;
    Ok(())
}

/// Runs the whole pipeline on raw notebook bytes.
///
/// The backend is constructed first so a missing API key or broken script
/// file fails before any work. The output directory is claimed next; the
/// stages then run in order, each leaving its artifact under
/// `.codelift-stages/` as it completes.
pub fn run_pipeline(notebook: &[u8], config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    let mut backend = build_backend(&config.backend)?;

    let parsed = parse_notebook(notebook)?;
    let cleaned = clean_cells(&parsed);
    let mut warnings: Vec<String> = cleaned.events.iter().map(CleanEvent::to_string).collect();
    if cleaned.cells.is_empty() {
        return Err(PipelineError::EmptyNotebook);
    }
    let mut graph = build_graph(&cleaned.cells)?;

    claim_out_dir(&config.out_dir)?;
    let stages = config.out_dir.join(STAGES_DIR);
    fs::create_dir_all(&stages)?;
    write_stage_artifact(&stages, "graph.json", &export_graph(&graph, ExportFormat::Json))?;

    let architect = run_architect(&mut graph, backend.as_mut())?;
    warnings.extend(architect.warnings.iter().cloned());
    write_stage_artifact(&stages, "adrs.json", &adr_artifact(&graph))?;

    let developer = run_developer(
        &mut graph,
        backend.as_mut(),
        &config.limits.developer(),
        &config.lint,
    )?;
    let refactored_dir = stages.join("refactored");
    fs::create_dir_all(&refactored_dir)?;
    for outcome in &developer.outcomes {
        fs::write(
            refactored_dir.join(format!("cell_{}.py", outcome.cell_id)),
            &outcome.code,
        )?;
        if outcome.kept_original {
            warnings.push(format!(
                "cell {}: no rewrite scored at least the original ({}); kept as written",
                outcome.cell_id, outcome.initial_score
            ));
        }
    }

    let (plan, plan_fell_back, plan_transcript) = plan_structure(&graph, backend.as_mut())?;
    if plan_fell_back {
        warnings.push("file plan rejected twice; used the fallback layout".to_string());
    }
    let mut plan_text = serde_json::to_string_pretty(&plan).expect("plan serializes");
    plan_text.push('\n');
    write_stage_artifact(&stages, "fileplan.json", &plan_text)?;

    let repo_dir = config.out_dir.join(REPO_DIR);
    let (populated, populate_transcript) = populate(
        &graph,
        &plan,
        backend.as_mut(),
        &repo_dir,
        &config.limits.structure(),
        &config.lint,
    )?;

    if config.trace {
        let mut transcripts = architect.transcripts;
        transcripts.extend(developer.transcripts);
        transcripts.push(plan_transcript);
        transcripts.push(populate_transcript);
        write_traces(
            &config.out_dir.join(TRACE_DIR),
            &transcripts,
            &populated.events,
        )?;
    }

    let substitutions = populated.substitutions();
    Ok(PipelineOutcome {
        out_dir: config.out_dir.clone(),
        repo_dir,
        cells: graph.len(),
        files: populated.files,
        substitutions,
        plan_fell_back,
        deduplicated: populated.deduplicated,
        warnings,
    })
}
