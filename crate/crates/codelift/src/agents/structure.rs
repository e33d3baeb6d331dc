//! Structure stage: decide the repository layout, let the model populate
//! a sandboxed workspace through tools, then enforce the plan
//! deterministically — every planned file exists, every file parses, every
//! cell's names are present, and duplicate definitions collapse to one
//! module plus imports. Enforcement makes the emitted repository's shape a
//! guarantee rather than a hope; the substitution count records how much
//! of it the model left to us.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    check_syntax, extract_bindings, extract_definitions, validate_code, DefKind, LintConfig,
    LintError,
};
use crate::graph::DependencyGraph;
use crate::llm::{run_tool_loop, ChatBackend, ChatMessage, LlmError, ToolRegistry};
use crate::prompts;
use crate::sandbox::SandboxedFs;

use super::architect::fenced_block;
use super::{AgentError, CellTranscript};

/// Where the emitted repository's content manifest lives, relative to the
/// workspace root.
pub const MANIFEST_FILE: &str = ".codelift-manifest.json";

/// One planned file.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FilePlanEntry {
    pub purpose: String,
    /// Cells whose code belongs in this file, ascending and deduplicated.
    pub cell_ids: Vec<usize>,
    /// Names this file provides to the rest of the repository.
    pub exports: Vec<String>,
}

/// The repository layout: package name plus a path → entry map.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FilePlan {
    pub root_module_name: String,
    pub entries: BTreeMap<String, FilePlanEntry>,
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Extracts and validates a file plan from a model reply. The reply must
/// contain a fenced block tagged `fileplan`; the plan must name a valid
/// package, keep every path a relative `.py` file under
/// `src/<root_module_name>/` (or exactly `main.py`), reference only real
/// cells, and cover every cell at least once.
pub fn parse_fileplan(raw: &str, graph: &DependencyGraph) -> Result<FilePlan, AgentError> {
    let invalid = |detail: String| AgentError::PlanInvalid { detail };

    let body = fenced_block(raw, "fileplan")
        .ok_or_else(|| invalid("reply has no fenced block tagged `fileplan`".to_string()))?;
    let mut plan: FilePlan = serde_json::from_str(&body)
        .map_err(|e| invalid(format!("fileplan block is not valid JSON: {e}")))?;

    if !is_identifier(&plan.root_module_name) {
        return Err(invalid(format!(
            "root_module_name `{}` is not a Python identifier",
            plan.root_module_name
        )));
    }
    if plan.entries.is_empty() {
        return Err(invalid("plan has no entries".to_string()));
    }

    let module_prefix = format!("src/{}/", plan.root_module_name);
    let mut covered = std::collections::BTreeSet::new();
    for (path, entry) in &mut plan.entries {
        if path != "main.py" {
            if !path.starts_with(&module_prefix) {
                return Err(invalid(format!(
                    "path `{path}` is outside `{module_prefix}` and is not `main.py`"
                )));
            }
            let ok_components = path.split('/').all(|part| {
                !part.is_empty() && part != "." && part != ".." && !part.contains('\\')
            });
            if !ok_components {
                return Err(invalid(format!("path `{path}` has unsafe components")));
            }
        }
        if !path.ends_with(".py") {
            return Err(invalid(format!("path `{path}` is not a `.py` file")));
        }
        for &id in &entry.cell_ids {
            graph
                .node(id)
                .map_err(|_| invalid(format!("path `{path}` references unknown cell {id}")))?;
            covered.insert(id);
        }
        entry.cell_ids.sort_unstable();
        entry.cell_ids.dedup();
    }

    for id in graph.ids() {
        if !covered.contains(&id) {
            return Err(invalid(format!("cell {id} is not assigned to any file")));
        }
    }

    Ok(plan)
}

/// The layout used when the model cannot produce an acceptable plan: one
/// module per cell under `src/<root>/cells/`, a package marker, and a
/// `main.py` that imports every cell module in notebook order.
pub fn fallback_plan(graph: &DependencyGraph, root: &str) -> FilePlan {
    let mut entries = BTreeMap::new();
    for id in graph.ids() {
        let node = graph.node(id).expect("id from graph");
        entries.insert(
            format!("src/{root}/cells/cell_{id}.py"),
            FilePlanEntry {
                purpose: format!("cell {id} as refactored"),
                cell_ids: vec![id],
                exports: node.bindings.defined.iter().cloned().collect(),
            },
        );
    }
    entries.insert(
        format!("src/{root}/__init__.py"),
        FilePlanEntry {
            purpose: format!("package marker for {root}"),
            cell_ids: Vec::new(),
            exports: Vec::new(),
        },
    );
    entries.insert(
        "main.py".to_string(),
        FilePlanEntry {
            purpose: "entry point that runs every cell module in notebook order".to_string(),
            cell_ids: Vec::new(),
            exports: Vec::new(),
        },
    );
    FilePlan {
        root_module_name: root.to_string(),
        entries,
    }
}

/// Asks the model for a file plan: one request, one corrective retry, and
/// the deterministic fallback layout if both replies are unusable.
/// Returns the plan, whether the fallback was used, and the transcript.
pub fn plan_structure(
    graph: &DependencyGraph,
    backend: &mut dyn ChatBackend,
) -> Result<(FilePlan, bool, CellTranscript), AgentError> {
    for id in graph.ids() {
        if graph.node(id).expect("id from graph").refactored.is_none() {
            return Err(AgentError::StageOrder {
                detail: format!("cell {id} is not refactored; run the developer first"),
            });
        }
    }

    let mut user = String::from("Plan the repository layout for these cells.\n\n");
    user.push_str(&graph.skeleton());
    user.push_str("\n\n");
    for id in graph.ids() {
        let node = graph.node(id).expect("id from graph");
        let defined: Vec<&str> = node.bindings.defined.iter().map(String::as_str).collect();
        user.push_str(&format!(
            "### cell {id} (defines: {})\n{}\n\n",
            defined.join(", "),
            node.current_source()
        ));
    }

    let mut transcript = vec![
        ChatMessage::system(prompts::FILEPLAN_SYSTEM),
        ChatMessage::user(&user),
    ];

    let mut fell_back = false;
    let mut plan = None;
    for attempt in 0..2 {
        let reply = backend.chat(&transcript, &[])?;
        transcript.push(reply.clone());
        match parse_fileplan(&reply.content, graph) {
            Ok(parsed) => {
                plan = Some(parsed);
                break;
            }
            Err(e) if attempt == 0 => {
                transcript.push(ChatMessage::user(&format!(
                    "That plan was rejected: {e}. Reply again with exactly one fenced \
                     block tagged `fileplan` that satisfies every rule."
                )));
            }
            Err(e) => {
                log::warn!("file plan rejected twice ({e}); using the fallback layout");
                fell_back = true;
            }
        }
    }
    let plan = plan.unwrap_or_else(|| fallback_plan(graph, "notebook"));

    Ok((
        plan,
        fell_back,
        CellTranscript {
            cell_id: None,
            label: "fileplan".to_string(),
            messages: transcript,
        },
    ))
}

/// Budget for the population conversation.
#[derive(Debug, Clone, Copy)]
pub struct StructureLimits {
    /// Maximum tool rounds while populating the workspace.
    pub max_rounds: usize,
}

impl Default for StructureLimits {
    fn default() -> Self {
        StructureLimits { max_rounds: 12 }
    }
}

/// Everything that happened to the workspace, in order: tool calls made
/// by the model and the corrections enforcement applied afterwards.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WorkspaceEvent {
    FileWritten { path: String, bytes: usize },
    FileRead { path: String },
    DirectoryListed { entries: usize },
    CellFetched { cell_id: usize },
    CodeValidated { score: f64, valid: bool },
    ToolRefused { tool: String, detail: String },
    FileCreated { path: String },
    FileReplaced { path: String },
    CellAppended { path: String, cell_id: usize },
    DefinitionDeduplicated {
        name: String,
        kept_in: String,
        removed_from: String,
    },
}

/// What populating the workspace produced.
#[derive(Debug)]
pub struct PopulateOutcome {
    /// Every emitted file (manifest excluded), sorted.
    pub files: Vec<String>,
    pub events: Vec<WorkspaceEvent>,
    /// Planned files the model never wrote; enforcement synthesized them.
    pub created: Vec<String>,
    /// Files whose content had to be discarded (unparseable).
    pub replaced: Vec<String>,
    /// Files that were missing cell definitions and had them appended.
    pub appended: Vec<String>,
    /// Names collapsed to a single definition plus imports.
    pub deduplicated: Vec<String>,
    pub rounds_used: usize,
    pub manifest_path: PathBuf,
}

impl PopulateOutcome {
    /// How many files enforcement had to create, replace, or extend. Zero
    /// means the model did the whole job itself.
    pub fn substitutions(&self) -> usize {
        self.created.len() + self.replaced.len() + self.appended.len()
    }
}

/// Converts a workspace path to the dotted module name `import` uses.
fn module_path(path: &str) -> String {
    let trimmed = path.strip_suffix(".py").unwrap_or(path);
    let mut parts: Vec<&str> = trimmed.split('/').collect();
    if parts.last() == Some(&"__init__") {
        parts.pop();
    }
    parts.join(".")
}

/// Import lines for a cell-less `main.py`: one per module with cells, in
/// notebook order (earliest cell first).
fn entry_point_imports(plan: &FilePlan) -> String {
    let mut modules: Vec<(usize, String)> = plan
        .entries
        .iter()
        .filter(|(path, entry)| path.as_str() != "main.py" && !entry.cell_ids.is_empty())
        .map(|(path, entry)| (entry.cell_ids[0], module_path(path)))
        .collect();
    modules.sort();
    let mut out = String::new();
    for (_, module) in modules {
        out.push_str(&format!("import {module}\n"));
    }
    out
}

/// Content for a planned file synthesized from the plan itself: the
/// assigned cells' refactored sources in order, entry-point imports for a
/// cell-less `main.py`, or nothing.
pub(crate) fn synthesize_content(graph: &DependencyGraph, plan: &FilePlan, path: &str) -> String {
    let entry = &plan.entries[path];
    if !entry.cell_ids.is_empty() {
        let mut out = String::new();
        for &id in &entry.cell_ids {
            let source = graph.node(id).expect("plan validated").current_source();
            if !out.is_empty() {
                out.push_str("\n\n");
            }
            out.push_str(source.trim_end());
        }
        out.push('\n');
        return out;
    }
    if path == "main.py" {
        return entry_point_imports(plan);
    }
    String::new()
}

fn python_files(workspace: &SandboxedFs) -> Result<Vec<String>, AgentError> {
    Ok(workspace
        .list_files()?
        .into_iter()
        .filter(|p| p.ends_with(".py"))
        .collect())
}

/// Creates every planned file the model skipped.
fn enforce_presence(
    workspace: &SandboxedFs,
    graph: &DependencyGraph,
    plan: &FilePlan,
    created: &mut Vec<String>,
    events: &mut Vec<WorkspaceEvent>,
) -> Result<(), AgentError> {
    for path in plan.entries.keys() {
        if !workspace.exists(path) {
            workspace.write_file(path, &synthesize_content(graph, plan, path))?;
            created.push(path.clone());
            events.push(WorkspaceEvent::FileCreated { path: path.clone() });
        }
    }
    Ok(())
}

/// Replaces any Python file that does not parse: planned files are
/// re-synthesized from the plan, strays are emptied.
fn enforce_syntax(
    workspace: &SandboxedFs,
    graph: &DependencyGraph,
    plan: &FilePlan,
    replaced: &mut Vec<String>,
    events: &mut Vec<WorkspaceEvent>,
) -> Result<(), AgentError> {
    for path in python_files(workspace)? {
        let content = workspace.read_file(&path)?;
        if check_syntax(&content).is_ok() {
            continue;
        }
        let fixed = if plan.entries.contains_key(&path) {
            synthesize_content(graph, plan, &path)
        } else {
            String::new()
        };
        workspace.write_file(&path, &fixed)?;
        if !replaced.contains(&path) {
            replaced.push(path.clone());
        }
        events.push(WorkspaceEvent::FileReplaced { path });
    }
    Ok(())
}

/// Appends a cell's source to its planned file when the file fails to
/// define the cell's names.
fn enforce_coverage(
    workspace: &SandboxedFs,
    graph: &DependencyGraph,
    plan: &FilePlan,
    replaced: &mut Vec<String>,
    appended: &mut Vec<String>,
    events: &mut Vec<WorkspaceEvent>,
) -> Result<(), AgentError> {
    for (path, entry) in &plan.entries {
        if entry.cell_ids.is_empty() {
            continue;
        }
        let mut content = workspace.read_file(path)?;
        let mut defined = match extract_bindings(&content) {
            Ok(bindings) => bindings.defined,
            Err(_) => {
                // Should be unreachable after the syntax pass; start over
                // from the plan if it somehow is not.
                content = synthesize_content(graph, plan, path);
                workspace.write_file(path, &content)?;
                if !replaced.contains(path) {
                    replaced.push(path.clone());
                }
                events.push(WorkspaceEvent::FileReplaced { path: path.clone() });
                extract_bindings(&content).expect("synthesized content parses").defined
            }
        };

        let mut touched = false;
        for &id in &entry.cell_ids {
            let need = &graph.node(id).expect("plan validated").bindings.defined;
            if need.is_subset(&defined) {
                continue;
            }
            let source = graph.node(id).expect("plan validated").current_source();
            if content.trim_end().is_empty() {
                content = format!("{}\n", source.trim_end());
            } else {
                content = format!("{}\n\n{}\n", content.trim_end(), source.trim_end());
            }
            defined = match extract_bindings(&content) {
                Ok(bindings) => bindings.defined,
                Err(_) => defined,
            };
            touched = true;
            events.push(WorkspaceEvent::CellAppended {
                path: path.clone(),
                cell_id: id,
            });
        }
        if touched {
            workspace.write_file(path, &content)?;
            appended.push(path.clone());
        }
    }
    Ok(())
}

#[derive(Debug)]
struct DefSite {
    path: String,
    body: String,
    start_line: usize,
    end_line: usize,
}

/// Collapses textually identical top-level `def`/`class` definitions that
/// appear in several files: the first file (path order) keeps the
/// definition, the others lose it and gain
/// `from <keeper module> import <name>` at the top. Names that collide
/// with *different* bodies are separate definitions in separate modules
/// and are left alone.
fn enforce_dry(
    workspace: &SandboxedFs,
    deduplicated: &mut Vec<String>,
    events: &mut Vec<WorkspaceEvent>,
) -> Result<(), AgentError> {
    let mut sites: BTreeMap<String, Vec<DefSite>> = BTreeMap::new();
    for path in python_files(workspace)? {
        let content = workspace.read_file(&path)?;
        let defs = match extract_definitions(&content) {
            Ok(defs) => defs,
            Err(_) => continue,
        };
        for def in defs {
            if !matches!(def.kind, DefKind::Function | DefKind::Class) {
                continue;
            }
            sites.entry(def.name.clone()).or_default().push(DefSite {
                path: path.clone(),
                body: def.source_slice.trim().to_string(),
                start_line: def.start_line,
                end_line: def.end_line,
            });
        }
    }

    // Per losing file: line ranges to cut and import lines to prepend.
    let mut removals: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let mut imports: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (name, occurrences) in &sites {
        let keeper = &occurrences[0];
        let mut any = false;
        for dup in &occurrences[1..] {
            if dup.path == keeper.path || dup.body != keeper.body {
                continue;
            }
            removals
                .entry(dup.path.clone())
                .or_default()
                .push((dup.start_line, dup.end_line));
            imports
                .entry(dup.path.clone())
                .or_default()
                .push(format!("from {} import {}", module_path(&keeper.path), name));
            events.push(WorkspaceEvent::DefinitionDeduplicated {
                name: name.clone(),
                kept_in: keeper.path.clone(),
                removed_from: dup.path.clone(),
            });
            any = true;
        }
        if any {
            deduplicated.push(name.clone());
        }
    }

    for (path, mut ranges) in removals {
        let original = workspace.read_file(&path)?;
        let mut lines: Vec<&str> = original.lines().collect();
        ranges.sort_unstable();
        for &(start, end) in ranges.iter().rev() {
            let end = end.min(lines.len());
            if start >= 1 && start <= end {
                lines.drain(start - 1..end);
            }
        }
        let mut import_lines = imports.remove(&path).unwrap_or_default();
        import_lines.sort();
        import_lines.dedup();
        let mut rebuilt = import_lines.join("\n");
        rebuilt.push('\n');
        let rest = lines.join("\n");
        if !rest.trim().is_empty() {
            rebuilt.push('\n');
            rebuilt.push_str(rest.trim_start_matches('\n'));
        }
        if !rebuilt.ends_with('\n') {
            rebuilt.push('\n');
        }

        if check_syntax(&rebuilt).is_err() {
            log::warn!("deduplication would break `{path}`; leaving it unchanged");
            continue;
        }
        workspace.write_file(&path, &rebuilt)?;
    }
    Ok(())
}

/// Writes the content manifest: every file except the manifest itself,
/// sorted by path, with size and SHA-256.
fn write_manifest(workspace: &SandboxedFs) -> Result<(Vec<String>, PathBuf), AgentError> {
    let files: Vec<String> = workspace
        .list_files()?
        .into_iter()
        .filter(|p| p != MANIFEST_FILE)
        .collect();
    let mut records = Vec::with_capacity(files.len());
    for path in &files {
        let content = workspace.read_file(path)?;
        records.push(json!({
            "path": path,
            "bytes": content.len(),
            "sha256": hex::encode(Sha256::digest(content.as_bytes())),
        }));
    }
    let manifest = json!({ "files": records });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    workspace.write_file(MANIFEST_FILE, &text)?;
    Ok((files, workspace.root().join(MANIFEST_FILE)))
}

/// Lets the model populate `workspace_root` through tools, then enforces
/// the plan. The model runs first and gets every chance; enforcement only
/// fills the gaps it leaves, and the outcome records each correction.
pub fn populate(
    graph: &DependencyGraph,
    plan: &FilePlan,
    backend: &mut dyn ChatBackend,
    workspace_root: &Path,
    limits: &StructureLimits,
    lint: &LintConfig,
) -> Result<(PopulateOutcome, CellTranscript), AgentError> {
    for id in graph.ids() {
        if graph.node(id).expect("id from graph").refactored.is_none() {
            return Err(AgentError::StageOrder {
                detail: format!("cell {id} is not refactored; run the developer first"),
            });
        }
    }

    let workspace = SandboxedFs::create(workspace_root)?;
    let events: RefCell<Vec<WorkspaceEvent>> = RefCell::new(Vec::new());
    let lint_failure: RefCell<Option<LintError>> = RefCell::new(None);

    let mut registry = ToolRegistry::new();
    registry.register(
        "write_file",
        "Create or overwrite one file in the workspace. Parent directories are \
         created automatically. Paths are relative to the workspace root.",
        json!({
            "type": "object",
            "properties": {
                "path": { "type": "string", "description": "relative file path" },
                "content": { "type": "string", "description": "complete file content" }
            },
            "required": ["path", "content"]
        }),
        Box::new(|args| {
            let path = args
                .get("path")
                .and_then(Value::as_str)
                .ok_or("arguments must contain a string field `path`")?;
            let content = args
                .get("content")
                .and_then(Value::as_str)
                .ok_or("arguments must contain a string field `content`")?;
            match workspace.write_file(path, content) {
                Ok(()) => {
                    events.borrow_mut().push(WorkspaceEvent::FileWritten {
                        path: path.to_string(),
                        bytes: content.len(),
                    });
                    Ok(json!({ "written": path, "bytes": content.len() }).to_string())
                }
                Err(e) => {
                    let detail = e.to_string();
                    events.borrow_mut().push(WorkspaceEvent::ToolRefused {
                        tool: "write_file".to_string(),
                        detail: detail.clone(),
                    });
                    Err(detail)
                }
            }
        }),
    );
    registry.register(
        "read_file",
        "Read one workspace file back.",
        json!({
            "type": "object",
            "properties": {
                "path": { "type": "string", "description": "relative file path" }
            },
            "required": ["path"]
        }),
        Box::new(|args| {
            let path = args
                .get("path")
                .and_then(Value::as_str)
                .ok_or("arguments must contain a string field `path`")?;
            match workspace.read_file(path) {
                Ok(content) => {
                    events
                        .borrow_mut()
                        .push(WorkspaceEvent::FileRead { path: path.to_string() });
                    Ok(content)
                }
                Err(e) => {
                    let detail = e.to_string();
                    events.borrow_mut().push(WorkspaceEvent::ToolRefused {
                        tool: "read_file".to_string(),
                        detail: detail.clone(),
                    });
                    Err(detail)
                }
            }
        }),
    );
    registry.register(
        "list_directory",
        "List the files under a workspace directory (recursively). Omit `path` \
         or pass \".\" for the workspace root.",
        json!({
            "type": "object",
            "properties": {
                "path": { "type": "string", "description": "relative directory path" }
            }
        }),
        Box::new(|args| {
            let prefix = match args.get("path").and_then(Value::as_str) {
                None | Some("") | Some(".") => String::new(),
                Some(dir) => format!("{}/", dir.trim_end_matches('/')),
            };
            let files: Vec<String> = workspace
                .list_files()
                .map_err(|e| e.to_string())?
                .into_iter()
                .filter(|p| p.starts_with(&prefix))
                .collect();
            events.borrow_mut().push(WorkspaceEvent::DirectoryListed {
                entries: files.len(),
            });
            Ok(json!({ "files": files }).to_string())
        }),
    );
    registry.register(
        "fetch_code",
        "Fetch one cell's final refactored source by its id.",
        json!({
            "type": "object",
            "properties": {
                "node_id": { "type": "integer", "description": "cell id from the plan" }
            },
            "required": ["node_id"]
        }),
        Box::new(|args| {
            let id = args
                .get("node_id")
                .and_then(Value::as_u64)
                .ok_or("arguments must contain an integer field `node_id`")? as usize;
            match graph.node(id) {
                Ok(node) => {
                    events
                        .borrow_mut()
                        .push(WorkspaceEvent::CellFetched { cell_id: id });
                    Ok(node.current_source().to_string())
                }
                Err(_) => Err(format!("unknown cell id {id}")),
            }
        }),
    );
    registry.register(
        "validation",
        "Lint a candidate file. Returns a 0-10 score, whether the code parses, \
         and individual findings.",
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
                .and_then(Value::as_str)
                .ok_or("arguments must contain a string field `code`")?;
            match validate_code(code, lint) {
                Ok(report) => {
                    events.borrow_mut().push(WorkspaceEvent::CodeValidated {
                        score: report.score.to_f64(),
                        valid: report.syntactically_valid,
                    });
                    Ok(json!({
                        "score": report.score.to_f64(),
                        "valid": report.syntactically_valid,
                        "messages": report.messages,
                    })
                    .to_string())
                }
                Err(e) => {
                    *lint_failure.borrow_mut() = Some(e);
                    Err("validation unavailable".to_string())
                }
            }
        }),
    );

    let mut user = String::from("Populate the workspace according to this file plan:\n\n");
    user.push_str("```fileplan\n");
    user.push_str(&serde_json::to_string_pretty(plan).expect("plan serializes"));
    user.push_str("\n```\n\n");
    user.push_str(
        "The workspace starts empty. Fetch each cell's final source with `fetch_code`, \
         write every planned file with `write_file`, and reply with a short completion \
         message once the workspace matches the plan.\n",
    );
    let messages = vec![
        ChatMessage::system(prompts::POPULATION_SYSTEM),
        ChatMessage::user(&user),
    ];

    let loop_result = run_tool_loop(backend, messages, &mut registry, limits.max_rounds);
    drop(registry);

    if let Some(failure) = lint_failure.into_inner() {
        return Err(AgentError::Lint(failure));
    }

    let (transcript, rounds_used) = match loop_result {
        Ok(outcome) => (outcome.transcript, outcome.rounds_used),
        Err(loop_err) => match loop_err.error {
            LlmError::RoundLimitExceeded { limit } => {
                // The model ran out of budget mid-population; enforcement
                // below completes the workspace from the plan.
                log::warn!("population hit the {limit}-round budget; enforcing the rest");
                (loop_err.transcript, limit)
            }
            other => return Err(AgentError::Backend(other)),
        },
    };

    let mut events = events.into_inner();
    let mut created = Vec::new();
    let mut replaced = Vec::new();
    let mut appended = Vec::new();
    let mut deduplicated = Vec::new();

    enforce_presence(&workspace, graph, plan, &mut created, &mut events)?;
    enforce_syntax(&workspace, graph, plan, &mut replaced, &mut events)?;
    enforce_coverage(
        &workspace, graph, plan, &mut replaced, &mut appended, &mut events,
    )?;
    enforce_dry(&workspace, &mut deduplicated, &mut events)?;
    // Deduplication reverts any edit that would break a file, so this
    // final pass is a no-op unless something slipped through.
    enforce_syntax(&workspace, graph, plan, &mut replaced, &mut events)?;
    let (files, manifest_path) = write_manifest(&workspace)?;

    deduplicated.sort();
    deduplicated.dedup();

    Ok((
        PopulateOutcome {
            files,
            events,
            created,
            replaced,
            appended,
            deduplicated,
            rounds_used: rounds_used.max(1),
            manifest_path,
        },
        CellTranscript {
            cell_id: None,
            label: "population".to_string(),
            messages: transcript,
        },
    ))
}

/// Output of the whole structure stage.
#[derive(Debug)]
pub struct StructureRun {
    pub plan: FilePlan,
    /// True when the model's plan was rejected and the fallback layout
    /// was used instead.
    pub plan_fell_back: bool,
    pub outcome: PopulateOutcome,
    pub transcripts: Vec<CellTranscript>,
}

/// Plans the layout and populates the workspace in one call.
pub fn run_structure(
    graph: &DependencyGraph,
    backend: &mut dyn ChatBackend,
    workspace_root: &Path,
    limits: &StructureLimits,
    lint: &LintConfig,
) -> Result<StructureRun, AgentError> {
    let (plan, plan_fell_back, plan_transcript) = plan_structure(graph, backend)?;
    let (outcome, populate_transcript) =
        populate(graph, &plan, backend, workspace_root, limits, lint)?;
    Ok(StructureRun {
        plan,
        plan_fell_back,
        outcome,
        transcripts: vec![plan_transcript, populate_transcript],
    })
}
