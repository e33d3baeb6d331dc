//! Command-line interface. Three subcommands mirror the pipeline's
//! natural checkpoints: `ingest` (clean cells), `graph` (dependency
//! graph), and `run` (the full transformation).
//!
//! `run` exit codes: 0 — clean run; 1 — the repository was emitted but
//! enforcement had to substitute for the model; 2 — the run failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{parse_score, BackendChoice, FileConfig, RunConfig, RunLimits};
use crate::graph::{build_graph, export_graph, ExportFormat};
use crate::ingest::{clean_cells, parse_notebook};
use crate::llm::EndpointConfig;
use crate::pipeline::run_pipeline;

#[derive(Parser)]
#[command(
    name = "codelift",
    version,
    about = "Turn a Jupyter notebook into a structured Python repository"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum GraphFormatArg {
    Dot,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a notebook and show its cleaned code cells.
    Ingest {
        /// Path to the .ipynb file.
        notebook: PathBuf,
        /// Emit the cells and cleanup events as JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Build the def/use dependency graph and export it.
    Graph {
        /// Path to the .ipynb file.
        notebook: PathBuf,
        /// Export format.
        #[arg(long, value_enum, default_value_t = GraphFormatArg::Dot)]
        format: GraphFormatArg,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the architect/developer/structure pipeline and emit a repository.
    Run {
        /// Path to the .ipynb file.
        notebook: PathBuf,
        /// Output directory; must not exist yet or be empty.
        #[arg(long)]
        out: PathBuf,
        /// OpenAI-compatible chat completions base URL.
        #[arg(long)]
        endpoint_url: Option<String>,
        /// Model name to request from the endpoint.
        #[arg(long)]
        model: Option<String>,
        /// Environment variable holding the API key.
        #[arg(long)]
        api_key_env: Option<String>,
        /// Replay scripted replies from this JSON file instead of an
        /// endpoint.
        #[arg(long)]
        mock_script: Option<PathBuf>,
        /// Write every stage conversation under <out>/.codelift-trace/.
        #[arg(long)]
        trace: bool,
        /// Lint score a refactored cell should reach (0..=10).
        #[arg(long)]
        accept_score: Option<String>,
        /// Validation rounds per cell in the developer stage.
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Tool rounds for the population conversation.
        #[arg(long)]
        populate_rounds: Option<usize>,
        /// External linter command; receives a temp .py path as its last
        /// argument.
        #[arg(long)]
        linter_cmd: Option<String>,
        /// Flat JSON config file; flags given here override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

pub fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Ingest { notebook, json } => ingest_command(&notebook, json),
        Command::Graph {
            notebook,
            format,
            out,
        } => graph_command(&notebook, format, out.as_deref()),
        Command::Run {
            notebook,
            out,
            endpoint_url,
            model,
            api_key_env,
            mock_script,
            trace,
            accept_score,
            max_rounds,
            populate_rounds,
            linter_cmd,
            config,
        } => {
            let flags = RunFlags {
                out,
                endpoint_url,
                model,
                api_key_env,
                mock_script,
                trace,
                accept_score,
                max_rounds,
                populate_rounds,
                linter_cmd,
                config,
            };
            run_command(&notebook, flags)
        }
    }
}

/// Prints an error and its cause chain the way a CLI should.
fn report(error: &dyn std::error::Error) -> ExitCode {
    eprintln!("codelift: {error}");
    let mut source = error.source();
    while let Some(cause) = source {
        eprintln!("  caused by: {cause}");
        source = cause.source();
    }
    ExitCode::from(2)
}

fn report_message(message: &str) -> ExitCode {
    eprintln!("codelift: {message}");
    ExitCode::from(2)
}

fn read_notebook(path: &Path) -> Result<Vec<u8>, std::io::Error> {
    std::fs::read(path)
}

fn ingest_command(notebook: &Path, json: bool) -> ExitCode {
    let raw = match read_notebook(notebook) {
        Ok(raw) => raw,
        Err(e) => return report(&e),
    };
    let parsed = match parse_notebook(&raw) {
        Ok(parsed) => parsed,
        Err(e) => return report(&e),
    };
    let cleaned = clean_cells(&parsed);

    if json {
        let doc = serde_json::json!({
            "cells": cleaned.cells.iter().map(|c| serde_json::json!({
                "index": c.index,
                "source": c.source,
            })).collect::<Vec<_>>(),
            "events": cleaned.events,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("serializes"));
        return ExitCode::SUCCESS;
    }

    println!(
        "{}: {} code cell(s) after cleanup",
        notebook.display(),
        cleaned.cells.len()
    );
    for cell in &cleaned.cells {
        println!("  cell {} ({} line(s))", cell.index, cell.source.lines().count());
    }
    for event in &cleaned.events {
        eprintln!("warning: {event}");
    }
    ExitCode::SUCCESS
}

fn graph_command(notebook: &Path, format: GraphFormatArg, out: Option<&Path>) -> ExitCode {
    let raw = match read_notebook(notebook) {
        Ok(raw) => raw,
        Err(e) => return report(&e),
    };
    let parsed = match parse_notebook(&raw) {
        Ok(parsed) => parsed,
        Err(e) => return report(&e),
    };
    let cleaned = clean_cells(&parsed);
    let graph = match build_graph(&cleaned.cells) {
        Ok(graph) => graph,
        Err(e) => return report(&e),
    };

    let rendered = export_graph(
        &graph,
        match format {
            GraphFormatArg::Dot => ExportFormat::Dot,
            GraphFormatArg::Json => ExportFormat::Json,
        },
    );
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, rendered) {
                return report(&e);
            }
        }
        None => print!("{rendered}"),
    }
    ExitCode::SUCCESS
}

struct RunFlags {
    out: PathBuf,
    endpoint_url: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    mock_script: Option<PathBuf>,
    trace: bool,
    accept_score: Option<String>,
    max_rounds: Option<usize>,
    populate_rounds: Option<usize>,
    linter_cmd: Option<String>,
    config: Option<PathBuf>,
}

/// Merges flags over the optional config file into a [`RunConfig`].
fn resolve_run_config(flags: RunFlags) -> Result<RunConfig, String> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path).map_err(|e| e.to_string())?,
        None => FileConfig::default(),
    };
    let file_accept_score = file.accept_score().map_err(|e| e.to_string())?;

    let endpoint_url = flags.endpoint_url.or(file.endpoint_url);
    let mock_script = flags.mock_script.or(file.mock_script);
    let backend = match (endpoint_url, mock_script) {
        (Some(_), Some(_)) => {
            return Err("choose one backend: --endpoint-url or --mock-script, not both".into())
        }
        (None, None) => {
            return Err("a backend is required: pass --endpoint-url (with --model) \
                 or --mock-script"
                .into())
        }
        (None, Some(path)) => BackendChoice::MockScript(path),
        (Some(url), None) => {
            let model = flags
                .model
                .or(file.model)
                .ok_or("--model is required with --endpoint-url")?;
            let mut endpoint = EndpointConfig::new(&url, &model);
            if let Some(var) = flags.api_key_env.or(file.api_key_env) {
                endpoint.api_key_env = var;
            }
            BackendChoice::Endpoint(endpoint)
        }
    };

    let mut limits = RunLimits::default();
    let accept_score = match &flags.accept_score {
        Some(text) => Some(parse_score(text)?),
        None => file_accept_score,
    };
    if let Some(score) = accept_score {
        limits.accept_score = score;
    }
    if let Some(rounds) = flags.max_rounds.or(file.max_rounds) {
        limits.developer_rounds = rounds;
    }
    if let Some(rounds) = flags.populate_rounds.or(file.populate_rounds) {
        limits.populate_rounds = rounds;
    }

    let mut lint = crate::analysis::LintConfig::default();
    if let Some(cmd) = flags.linter_cmd.or(file.linter_cmd) {
        lint.linter_cmd = Some(cmd);
        lint.require_external = true;
    }

    Ok(RunConfig {
        backend,
        out_dir: flags.out,
        trace: flags.trace || file.trace.unwrap_or(false),
        limits,
        lint,
    })
}

fn run_command(notebook: &Path, flags: RunFlags) -> ExitCode {
    let config = match resolve_run_config(flags) {
        Ok(config) => config,
        Err(message) => return report_message(&message),
    };
    let raw = match read_notebook(notebook) {
        Ok(raw) => raw,
        Err(e) => return report(&e),
    };
    let outcome = match run_pipeline(&raw, &config) {
        Ok(outcome) => outcome,
        Err(e) => return report(&e),
    };

    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "emitted {} file(s) from {} cell(s) into {}",
        outcome.files.len(),
        outcome.cells,
        outcome.repo_dir.display()
    );
    if outcome.plan_fell_back {
        println!("file plan: fallback layout (model plan rejected)");
    }
    if !outcome.deduplicated.is_empty() {
        println!("deduplicated: {}", outcome.deduplicated.join(", "));
    }
    if outcome.substitutions > 0 {
        println!(
            "substitutions: {} file(s) were completed by enforcement rather than the model",
            outcome.substitutions
        );
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
