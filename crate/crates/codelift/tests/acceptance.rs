//! The guarantees codelift ships on, one test per guarantee. Each test
//! checks the implementation against an oracle that does not share its
//! code path: a brute-force linear scan for the graph, Python's own
//! tokenizer for comment stripping, hand-computed rationals for scores,
//! full byte comparison of output trees for determinism. Run with
//! `cargo test --test acceptance`; the per-test `ok`/`FAILED` lines are
//! the scorecard.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use num_rational::Rational64;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestError, TestRunner};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use codelift::agents::architect::{AdrDecision, AdrRecord, DecisionCategory};
use codelift::agents::developer::{refactor_cell, DeveloperLimits};
use codelift::analysis::{
    check_syntax, extract_bindings, extract_definitions, validate_code, DefKind, LintConfig,
    Score,
};
use codelift::config::{BackendChoice, RunConfig, RunLimits};
use codelift::graph::build_graph;
use codelift::ingest::{clean_cells, parse_notebook, strip_comments, CellKind, CleanCell};
use codelift::llm::{
    run_tool_loop, BackendScript, ChatMessage, LlmError, ScriptBackend, ScriptStep, ToolRegistry,
};
use codelift::offline::{identity_script, IDENTITY_ROOT};
use codelift::pipeline::run_pipeline;
use codelift::sandbox::SandboxedFs;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

const FIXTURES: [&str; 2] = ["linear_pipeline.ipynb", "dup_helpers.ipynb"];

fn fixture_bytes(name: &str) -> Vec<u8> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    fs::read(&path).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// Writes the identity script for `notebook` to `dir` and returns its path.
fn identity_script_file(notebook: &[u8], dir: &Path) -> PathBuf {
    let parsed = parse_notebook(notebook).expect("fixture parses");
    let cleaned = clean_cells(&parsed);
    let graph = build_graph(&cleaned.cells).expect("fixture cells parse");
    let path = dir.join("identity_script.json");
    fs::write(&path, identity_script(&graph).to_json()).expect("script written");
    path
}

/// Runs the library pipeline on `notebook` under an identity script.
/// Returns the temp dir (keep it alive) and the outcome.
fn run_identity(notebook: &[u8]) -> (tempfile::TempDir, codelift::pipeline::PipelineOutcome) {
    let dir = tempfile::tempdir().expect("tempdir");
    let script = identity_script_file(notebook, dir.path());
    let config = RunConfig {
        backend: BackendChoice::MockScript(script),
        out_dir: dir.path().join("out"),
        trace: false,
        limits: RunLimits::default(),
        lint: LintConfig::default(),
    };
    let outcome = run_pipeline(notebook, &config).expect("identity run succeeds");
    (dir, outcome)
}

/// Relative path -> sha256 of every file under `root`.
fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    let mut hashes = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.expect("walk output tree");
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("under root")
            .to_string_lossy()
            .replace('\\', "/");
        let bytes = fs::read(entry.path()).expect("read output file");
        hashes.insert(rel, hex::encode(Sha256::digest(&bytes)));
    }
    hashes
}

/// All `.py` files under `root` as (relative path, contents).
fn python_files(root: &Path) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.expect("walk repo");
        if entry.file_type().is_file()
            && entry.path().extension().is_some_and(|e| e == "py")
        {
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("under root")
                .to_string_lossy()
                .replace('\\', "/");
            files.push((rel, fs::read_to_string(entry.path()).expect("read .py")));
        }
    }
    files
}

fn codelift_binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codelift"))
}

// ---------------------------------------------------------------------------
// 1. Graph edges match a brute-force linear-scan oracle
// ---------------------------------------------------------------------------

/// The 10-name pool generated cells draw from.
const POOL: [&str; 10] = [
    "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa",
];
const MODULES: [&str; 4] = ["os", "sys", "math", "re"];

/// A generated cell whose def/use sets are known by construction, so the
/// oracle never has to parse anything.
struct GenCell {
    index: usize,
    source: String,
    defined: BTreeSet<String>,
    used: BTreeSet<String>,
}

enum GenStmt {
    /// `target = a + b + 3`
    Assign { target: usize, operands: Vec<usize> },
    /// `target += a + 3`
    AugAssign { target: usize, operands: Vec<usize> },
    /// `def name(param):\n    return param + a + 2`
    FuncDef {
        name: usize,
        param: Option<usize>,
        operands: Vec<usize>,
    },
    /// `import name` or `import <module> as name`
    Import { binds: usize, aliased: bool },
}

impl GenStmt {
    fn binds(&self) -> usize {
        match self {
            GenStmt::Assign { target, .. } | GenStmt::AugAssign { target, .. } => *target,
            GenStmt::FuncDef { name, .. } => *name,
            GenStmt::Import { binds, .. } => *binds,
        }
    }
}

fn gen_stmt(rng: &mut ChaCha8Rng) -> GenStmt {
    let operands = |rng: &mut ChaCha8Rng, min: usize| -> Vec<usize> {
        let n = rng.gen_range(min..=2);
        (0..n).map(|_| rng.gen_range(0..POOL.len())).collect()
    };
    match rng.gen_range(0..4) {
        0 => GenStmt::Assign {
            target: rng.gen_range(0..POOL.len()),
            operands: operands(rng, 0),
        },
        1 => GenStmt::AugAssign {
            target: rng.gen_range(0..POOL.len()),
            operands: operands(rng, 1),
        },
        2 => GenStmt::FuncDef {
            name: rng.gen_range(0..POOL.len()),
            param: if rng.gen_bool(0.5) {
                Some(rng.gen_range(0..POOL.len()))
            } else {
                None
            },
            operands: operands(rng, 1),
        },
        _ => GenStmt::Import {
            binds: rng.gen_range(0..POOL.len()),
            aliased: rng.gen_bool(0.5),
        },
    }
}

/// Renders a cell and computes its def/use sets by construction:
/// top-level reads count as uses unless the name was already bound
/// earlier in the same cell, while reads inside a function body run
/// later and so see every top-level binding of the cell.
fn gen_cell(rng: &mut ChaCha8Rng, index: usize) -> GenCell {
    let stmts: Vec<GenStmt> = (0..rng.gen_range(1..=4)).map(|_| gen_stmt(rng)).collect();
    let defined: BTreeSet<String> = stmts.iter().map(|s| POOL[s.binds()].to_string()).collect();

    let mut bound: BTreeSet<&str> = BTreeSet::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut source = String::new();

    for stmt in &stmts {
        match stmt {
            GenStmt::Assign { target, operands } => {
                for &op in operands {
                    if !bound.contains(POOL[op]) {
                        used.insert(POOL[op].to_string());
                    }
                }
                let expr = render_sum(operands, rng.gen_range(0..9));
                source.push_str(&format!("{} = {}\n", POOL[*target], expr));
                bound.insert(POOL[*target]);
            }
            GenStmt::AugAssign { target, operands } => {
                for &op in operands {
                    if !bound.contains(POOL[op]) {
                        used.insert(POOL[op].to_string());
                    }
                }
                if !bound.contains(POOL[*target]) {
                    used.insert(POOL[*target].to_string());
                }
                let expr = render_sum(operands, rng.gen_range(0..9));
                source.push_str(&format!("{} += {}\n", POOL[*target], expr));
                bound.insert(POOL[*target]);
            }
            GenStmt::FuncDef {
                name,
                param,
                operands,
            } => {
                let param_name = match param {
                    Some(p) => POOL[*p],
                    None => "value",
                };
                for &op in operands {
                    if POOL[op] != param_name && !defined.contains(POOL[op]) {
                        used.insert(POOL[op].to_string());
                    }
                }
                let expr = render_sum(operands, rng.gen_range(0..9));
                source.push_str(&format!(
                    "def {}({}):\n    return {} + {}\n",
                    POOL[*name], param_name, param_name, expr
                ));
                bound.insert(POOL[*name]);
            }
            GenStmt::Import { binds, aliased } => {
                if *aliased {
                    let module = MODULES[rng.gen_range(0..MODULES.len())];
                    source.push_str(&format!("import {} as {}\n", module, POOL[*binds]));
                } else {
                    source.push_str(&format!("import {}\n", POOL[*binds]));
                }
                bound.insert(POOL[*binds]);
            }
        }
    }

    GenCell {
        index,
        source,
        defined,
        used,
    }
}

fn render_sum(operands: &[usize], literal: u32) -> String {
    let mut parts: Vec<String> = operands.iter().map(|&op| POOL[op].to_string()).collect();
    parts.push(literal.to_string());
    parts.join(" + ")
}

/// The oracle: for every used name, scan all earlier cells front to back
/// and keep the last definer seen. O(n²) and proudly so.
fn oracle_edges(cells: &[GenCell]) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for (pos, cell) in cells.iter().enumerate() {
        for name in &cell.used {
            let mut parent = None;
            for earlier in &cells[..pos] {
                if earlier.defined.contains(name) {
                    parent = Some(earlier.index);
                }
            }
            if let Some(p) = parent {
                edges.insert((p, cell.index));
            }
        }
    }
    edges
}

#[test]
fn criterion_01_dependency_graph_matches_linear_scan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0109);
    let mut total_edges = 0usize;
    for nb in 0..200 {
        let n_cells = rng.gen_range(5..=15);
        let mut cells = Vec::with_capacity(n_cells);
        let mut index = rng.gen_range(0..=2);
        for _ in 0..n_cells {
            cells.push(gen_cell(&mut rng, index));
            // Leave gaps as markdown cells would, so ids differ from
            // positions.
            index += rng.gen_range(1..=3);
        }

        let clean: Vec<CleanCell> = cells
            .iter()
            .map(|c| CleanCell {
                index: c.index,
                source: c.source.clone(),
            })
            .collect();
        let graph = build_graph(&clean)
            .unwrap_or_else(|e| panic!("notebook {nb}: generated cell failed to parse: {e}"));

        let expected = oracle_edges(&cells);
        assert_eq!(
            graph.edges(),
            &expected,
            "notebook {nb} disagrees with the oracle; sources:\n{}",
            cells
                .iter()
                .map(|c| format!("--- cell {} ---\n{}", c.index, c.source))
                .collect::<Vec<_>>()
                .join("")
        );
        total_edges += expected.len();
    }
    // The corpus must actually exercise resolution, not pass vacuously.
    assert!(
        total_edges > 500,
        "generator produced suspiciously few edges: {total_edges}"
    );
}

// ---------------------------------------------------------------------------
// 2. Two runs of the same inputs are byte-identical
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_reruns_are_byte_identical() {
    let notebook = fixture_bytes("linear_pipeline.ipynb");
    let dir = tempfile::tempdir().expect("tempdir");
    let nb_path = dir.path().join("notebook.ipynb");
    fs::write(&nb_path, &notebook).expect("notebook written");
    let script = identity_script_file(&notebook, dir.path());

    let mut trees = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let output = codelift_binary()
            .arg("run")
            .arg(&nb_path)
            .arg("--out")
            .arg(&out)
            .arg("--mock-script")
            .arg(&script)
            .arg("--trace")
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "{run} run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        trees.push(hash_tree(&out));
    }

    assert_eq!(trees[0], trees[1], "reruns differ somewhere in the tree");
    assert!(
        trees[0].contains_key("repo/.codelift-manifest.json"),
        "manifest missing: {:?}",
        trees[0].keys().collect::<Vec<_>>()
    );
    assert!(
        trees[0].keys().any(|k| k.starts_with(".codelift-trace/")),
        "traced run left no transcripts"
    );
}

// ---------------------------------------------------------------------------
// 3. Identity runs preserve each cell's defined names
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_identity_pipeline_preserves_defined_names() {
    for fixture in FIXTURES {
        let notebook = fixture_bytes(fixture);
        let parsed = parse_notebook(&notebook).expect("fixture parses");
        let cleaned = clean_cells(&parsed);
        let (_dir, outcome) = run_identity(&notebook);

        for cell in &cleaned.cells {
            let emitted_path = outcome
                .repo_dir
                .join(format!("src/{IDENTITY_ROOT}/cells/cell_{}.py", cell.index));
            let emitted = fs::read_to_string(&emitted_path)
                .unwrap_or_else(|e| panic!("{fixture}: {}: {e}", emitted_path.display()));
            let expected = extract_bindings(&cell.source).expect("cleaned cell parses");
            let got = extract_bindings(&emitted).expect("emitted cell parses");
            assert_eq!(
                got.defined, expected.defined,
                "{fixture}: cell {} lost or gained top-level names",
                cell.index
            );
        }

        for (rel, text) in python_files(&outcome.repo_dir) {
            assert!(
                check_syntax(&text).is_ok(),
                "{fixture}: emitted file {rel} does not parse"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// 4. The developer never makes a cell score worse
// ---------------------------------------------------------------------------

const ORIGINALS: [&str; 4] = [
    "x = 1\n",
    "import os\n",
    "import os\nimport sys\nvalue = 2\n",
    "list = [1]\n",
];

const CANDIDATES: [&str; 6] = [
    "x = 1\n",
    "import os\nx = 1\n",
    "def f(:\n",
    "items = [1, 2, 3]\ntotal = sum(items)\n",
    "import os\nimport sys\ny = 2\n",
    "list = [1]\n",
];

#[derive(Debug, Clone)]
enum FinalReply {
    /// The last message carries a fenced block with this candidate.
    Block(usize),
    /// The last message has no block; the corrective retry supplies one.
    RetryThenBlock(usize),
}

fn developer_case(
    original: &str,
    submissions: &[usize],
    final_reply: &FinalReply,
    max_rounds: usize,
) {
    let cells = vec![CleanCell {
        index: 0,
        source: original.to_string(),
    }];
    let mut graph = build_graph(&cells).expect("original parses");
    graph
        .set_adr(
            0,
            AdrRecord {
                cell_id: 0,
                decisions: vec![AdrDecision {
                    title: "Tidy the cell".to_string(),
                    description: "Keep behaviour, improve shape.".to_string(),
                    parent_refs: vec![],
                    category: DecisionCategory::Other,
                }],
            },
        )
        .expect("adr accepted");

    let mut steps: Vec<ScriptStep> = submissions
        .iter()
        .map(|&i| ScriptStep {
            content: String::new(),
            tool_calls: vec![ScriptStep::call(
                "validation",
                json!({ "code": CANDIDATES[i] }),
            )],
        })
        .collect();
    match final_reply {
        FinalReply::Block(i) => {
            steps.push(ScriptStep::text(format!(
                "Final version:\n\n```python\n{}```\n",
                CANDIDATES[*i]
            )));
        }
        FinalReply::RetryThenBlock(i) => {
            steps.push(ScriptStep::text("Looks good to me."));
            steps.push(ScriptStep::text(format!(
                "```python\n{}```\n",
                CANDIDATES[*i]
            )));
        }
    }

    let mut backend = ScriptBackend::new(BackendScript::new(steps), true);
    let limits = DeveloperLimits {
        max_rounds,
        accept_score: Score::parse_decimal("8").expect("score literal"),
    };
    let lint = LintConfig::default();
    let (outcome, _transcript) =
        refactor_cell(&graph, 0, &mut backend, &limits, &lint).expect("refactor completes");

    let baseline = validate_code(original, &lint)
        .expect("builtin scorer")
        .score;
    assert!(
        outcome.score >= baseline,
        "score regressed: {} < {} (original {original:?}, submissions {submissions:?}, \
         final {final_reply:?}, max_rounds {max_rounds})",
        outcome.score,
        baseline
    );
    assert_eq!(outcome.initial_score, baseline);
    assert!(
        outcome.rounds_used <= max_rounds,
        "rounds_used {} exceeds the budget {max_rounds}",
        outcome.rounds_used
    );
    assert!(
        check_syntax(&outcome.code).is_ok(),
        "chosen code does not parse"
    );
    if outcome.kept_original {
        assert_eq!(outcome.code, original);
        assert_eq!(outcome.score, baseline);
    }
}

#[test]
fn criterion_04_developer_never_regresses_the_score() {
    let strategy = (
        0..ORIGINALS.len(),
        prop::collection::vec(0..CANDIDATES.len(), 0..=5),
        prop_oneof![
            (0..CANDIDATES.len()).prop_map(FinalReply::Block),
            (0..CANDIDATES.len()).prop_map(FinalReply::RetryThenBlock),
        ],
        1..=5usize,
    );
    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        ..PropConfig::default()
    });
    let result = runner.run(&strategy, |(orig, submissions, final_reply, max_rounds)| {
        developer_case(ORIGINALS[orig], &submissions, &final_reply, max_rounds);
        Ok(())
    });
    match result {
        Ok(()) => {}
        Err(TestError::Fail(reason, case)) => {
            panic!("monotonicity violated: {reason}; minimal case {case:?}")
        }
        Err(TestError::Abort(reason)) => panic!("property run aborted: {reason}"),
    }
}

// ---------------------------------------------------------------------------
// 5. Scores reproduce the hand-computed deduction table exactly
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_validation_scores_reproduce_the_deduction_table() {
    let long_line = format!("x = \"{}\"\n", "a".repeat(115));
    assert_eq!(long_line.lines().next().unwrap().chars().count(), 121);
    let two_long_lines = format!(
        "x = \"{}\"\ny = \"{}\"\n",
        "a".repeat(115),
        "b".repeat(115)
    );
    let many_unused: String = (0..21).map(|i| format!("import mod_{i}\n")).collect();

    // (source, expected score as an exact rational, expected validity).
    // Deductions: unused import 1/2, shadowed builtin 1/2, line over 120
    // characters 1/10. Valid code floors at 1/10; 0 is reserved for code
    // that does not parse.
    let table: [(&str, Rational64, bool); 10] = [
        ("x = 1\n", Rational64::new(10, 1), true),
        ("import os\n", Rational64::new(19, 2), true),
        ("import os\nimport sys\n\nx = 1\n", Rational64::new(9, 1), true),
        ("import os\nprint(os.getcwd())\n", Rational64::new(10, 1), true),
        ("list = [1, 2]\n", Rational64::new(19, 2), true),
        (&long_line, Rational64::new(99, 10), true),
        (&two_long_lines, Rational64::new(49, 5), true),
        (
            // One unused import plus a builtin shadowed by a def.
            "import json\ndef dict(x):\n    return x\n",
            Rational64::new(9, 1),
            true,
        ),
        (
            // A single line earning two deductions: the alias is unused
            // and shadows a builtin.
            "from os import path as list\n",
            Rational64::new(9, 1),
            true,
        ),
        (&many_unused, Rational64::new(1, 10), true),
    ];

    let lint = LintConfig::default();
    for (i, (source, expected, valid)) in table.iter().enumerate() {
        let report = validate_code(source, &lint).expect("builtin scorer");
        assert_eq!(
            report.score.as_rational(),
            *expected,
            "table row {i} ({source:?}): got {}",
            report.score
        );
        assert_eq!(report.syntactically_valid, *valid, "table row {i}");
    }

    // Zero means "does not parse", in both directions.
    let broken = ["def f(:\n", "x =\n", "1 +\n", "(\n"];
    for source in broken {
        let report = validate_code(source, &lint).expect("builtin scorer");
        assert!(!report.syntactically_valid, "{source:?} should not parse");
        assert_eq!(report.score, Score::ZERO, "{source:?} must score 0");
    }
    for (source, _, _) in &table {
        let report = validate_code(source, &lint).expect("builtin scorer");
        assert_eq!(
            report.score == Score::ZERO,
            !report.syntactically_valid,
            "score-zero/invalid equivalence broken for {source:?}"
        );
    }
}

// ---------------------------------------------------------------------------
// 6. A helper pasted into three cells ends up defined exactly once
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_duplicate_definitions_collapse_to_one() {
    let notebook = fixture_bytes("dup_helpers.ipynb");
    let (_dir, outcome) = run_identity(&notebook);

    let files = python_files(&outcome.repo_dir);
    let mut def_sites = Vec::new();
    for (rel, text) in &files {
        assert!(
            check_syntax(text).is_ok(),
            "emitted file {rel} does not parse"
        );
        for def in extract_definitions(text).expect("emitted file parses") {
            if def.kind == DefKind::Function && def.name == "clamp" {
                def_sites.push(rel.clone());
            }
        }
    }
    assert_eq!(
        def_sites,
        vec![format!("src/{IDENTITY_ROOT}/cells/cell_1.py")],
        "clamp should survive only in the first cell's file"
    );

    // The other two copies became imports of the surviving definition,
    // so each cell still binds the name.
    for losing_cell in [2, 3] {
        let rel = format!("src/{IDENTITY_ROOT}/cells/cell_{losing_cell}.py");
        let text = &files
            .iter()
            .find(|(path, _)| *path == rel)
            .unwrap_or_else(|| panic!("{rel} missing from the emitted repo"))
            .1;
        assert!(
            text.lines()
                .any(|l| l == format!("from src.{IDENTITY_ROOT}.cells.cell_1 import clamp")),
            "{rel} should import clamp instead of defining it:\n{text}"
        );
        let bindings = extract_bindings(text).expect("parses");
        assert!(
            bindings.defined.contains("clamp"),
            "{rel} no longer binds clamp at all"
        );
    }

    assert!(
        outcome.deduplicated.iter().all(|name| name == "clamp"),
        "unexpected deduplications: {:?}",
        outcome.deduplicated
    );
    assert!(!outcome.deduplicated.is_empty());
}

// ---------------------------------------------------------------------------
// 7. Hostile tool paths never touch anything outside the workspace
// ---------------------------------------------------------------------------

fn hostile_paths() -> Vec<String> {
    let mut paths = Vec::new();
    for depth in 1..=8 {
        paths.push(format!("{}escape_{depth}.txt", "../".repeat(depth)));
        paths.push(format!("nested/{}breakout_{depth}.txt", "../".repeat(depth + 1)));
        paths.push(format!("a/b/{}deep_{depth}.txt", "../".repeat(depth + 2)));
    }
    for target in [
        "/tmp/codelift_pwned.txt",
        "/etc/codelift_pwned",
        "/var/tmp/codelift_pwned",
        "/root/codelift_pwned",
        "//doubled/pwned.txt",
        "/./pwned.txt",
        "/../pwned.txt",
    ] {
        for i in 0..5 {
            paths.push(format!("{target}.{i}"));
        }
    }
    for fragment in [
        "..",
        "../",
        "./..",
        "./../up.txt",
        "x/./../../y.txt",
        "x/../../y.txt",
        "valid/../../../etc/hosts",
        "a/../b/../../c.txt",
    ] {
        paths.push(fragment.to_string());
    }
    // Through the in-workspace symlinks planted by the test. Only names
    // under the `sneaky` directory symlink vary: a fresh name next to the
    // `flat.txt` file symlink would be an ordinary in-workspace file.
    for stem in [
        "sneaky/inject",
        "sneaky/deep/inject",
        "sneaky/../sneaky/inject",
    ] {
        for i in 0..10 {
            paths.push(format!("{stem}_{i}.txt"));
        }
    }
    paths.push("sneaky/inject.txt".to_string());
    paths.push("flat.txt".to_string());
    paths.push("flat.txt/below.txt".to_string());
    paths.push("sneaky".to_string());
    paths
}

/// Path -> contents snapshot of everything under `root` except `skip`.
fn snapshot_outside(root: &Path, skip: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut snapshot = BTreeMap::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.expect("walk outer dir");
        if entry.path().starts_with(skip) || !entry.file_type().is_file() {
            continue;
        }
        snapshot.insert(
            entry.path().to_string_lossy().into_owned(),
            fs::read(entry.path()).expect("read outer file"),
        );
    }
    snapshot
}

#[test]
fn criterion_07_hostile_paths_never_touch_the_outside() {
    let outer = tempfile::tempdir().expect("tempdir");
    let workspace = outer.path().join("workspace");
    let outside = outer.path().join("outside");
    fs::create_dir_all(&outside).expect("outside dir");
    fs::write(outside.join("marker.txt"), "untouchable").expect("marker");

    let sandbox = SandboxedFs::create(&workspace).expect("sandbox");
    std::os::unix::fs::symlink(&outside, workspace.join("sneaky")).expect("dir symlink");
    std::os::unix::fs::symlink(outside.join("marker.txt"), workspace.join("flat.txt"))
        .expect("file symlink");

    let before = snapshot_outside(outer.path(), &workspace);
    let paths = hostile_paths();
    assert!(paths.len() >= 100, "need 100 hostile paths, have {}", paths.len());

    for path in &paths {
        assert!(
            sandbox.write_file(path, "pwned").is_err(),
            "write through {path:?} was allowed"
        );
        assert!(
            sandbox.read_file(path).is_err(),
            "read through {path:?} was allowed"
        );
    }

    let after = snapshot_outside(outer.path(), &workspace);
    assert_eq!(before, after, "something outside the workspace changed");
    assert_eq!(
        fs::read_to_string(outside.join("marker.txt")).expect("marker"),
        "untouchable"
    );
    // The workspace itself gained nothing either: every hostile call was
    // refused before any I/O.
    assert_eq!(sandbox.list_files().expect("list"), Vec::<String>::new());
}

// ---------------------------------------------------------------------------
// 8. A runaway tool conversation stops after exactly max_rounds
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_runaway_tool_calls_stop_at_the_round_limit() {
    for limit in [1usize, 3, 6] {
        let steps: Vec<ScriptStep> = (0..limit + 5)
            .map(|i| ScriptStep {
                content: String::new(),
                tool_calls: vec![ScriptStep::call("noop", json!({ "round": i }))],
            })
            .collect();
        let mut backend = ScriptBackend::new(BackendScript::new(steps), false);

        let executions = RefCell::new(0usize);
        let mut registry = ToolRegistry::new();
        registry.register(
            "noop",
            "Does nothing, endlessly.",
            json!({ "type": "object", "properties": {} }),
            Box::new(|_args| {
                *executions.borrow_mut() += 1;
                Ok("{}".to_string())
            }),
        );

        let err = run_tool_loop(
            &mut backend,
            vec![ChatMessage::user("go")],
            &mut registry,
            limit,
        )
        .expect_err("runaway scripts must not succeed");
        drop(registry);

        assert!(
            matches!(err.error, LlmError::RoundLimitExceeded { limit: l } if l == limit),
            "limit {limit}: wrong error {:?}",
            err.error
        );
        assert_eq!(
            executions.into_inner(),
            limit,
            "limit {limit}: executor ran a different number of times"
        );
    }
}

// ---------------------------------------------------------------------------
// 9. Comment stripping agrees with Python's tokenizer
// ---------------------------------------------------------------------------

/// Reference implementation on top of Python's `tokenize`: remove every
/// COMMENT token and right-trim the spaces/tabs it left behind, keeping
/// line endings.
const TOKENIZE_ORACLE: &str = r#"
import io, sys, tokenize

src = sys.stdin.buffer.read().decode("utf-8")
lines = src.splitlines(keepends=True)
drop = {}
for tok in tokenize.generate_tokens(io.StringIO(src).readline):
    if tok.type == tokenize.COMMENT:
        drop[tok.start[0]] = tok.start[1]
out = []
for i, line in enumerate(lines, start=1):
    if i in drop:
        body = line.rstrip("\n")
        ending = line[len(body):]
        out.append(body[:drop[i]].rstrip(" \t") + ending)
    else:
        out.append(line)
sys.stdout.write("".join(out))
"#;

fn tokenizer_oracle(source: &str) -> String {
    let mut child = Command::new("python3")
        .arg("-c")
        .arg(TOKENIZE_ORACLE)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("python3 must be available for the tokenizer oracle");
    child
        .stdin
        .take()
        .expect("stdin piped")
        .write_all(source.as_bytes())
        .expect("feed oracle");
    let output = child.wait_with_output().expect("oracle runs");
    assert!(
        output.status.success(),
        "tokenizer oracle failed on {source:?}: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).expect("oracle output is utf-8")
}

/// Lines the snippet generator assembles. Every template is lexically
/// complete (no unterminated strings), so the tokenizer always accepts
/// the result.
fn gen_snippet(rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for _ in 0..rng.gen_range(3..=10) {
        let k: u32 = rng.gen_range(0..100);
        let n: u32 = rng.gen_range(0..50);
        match rng.gen_range(0..10) {
            0 => out.push_str(&format!("x{k} = {n}  # set to {n}\n")),
            1 => out.push_str(&format!("# section {k}\n")),
            2 => out.push_str(&format!("s{k} = 'hash # inside'\n")),
            3 => out.push_str(&format!("d{k} = \"quote \\\" then # inside\"  # trailing\n")),
            4 => out.push_str(&format!("r{k} = r\"raw\\path\"  # windows\n")),
            5 => out.push_str(&format!("m{k} = 17 % {n}\n")),
            6 => out.push_str(&format!("t{k} = \"\"\"\nline # one\n\"\"\"  # after\n")),
            7 => out.push_str(&format!("def f{k}(v):\n    return v * {n}  # scaled\n")),
            8 => out.push('\n'),
            _ => out.push_str(&format!("u{k} = '{n}'   \n")),
        }
    }
    // Sometimes end without a newline, with or without a comment there.
    match rng.gen_range(0..3) {
        0 => out.push_str(&format!("tail = {}  # last", rng.gen_range(0..9))),
        1 => out.push_str("tail = 0"),
        _ => {}
    }
    out
}

#[test]
fn criterion_09_comment_stripping_matches_the_tokenizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0909);
    for i in 0..50 {
        let snippet = gen_snippet(&mut rng);
        let ours = strip_comments(&snippet);
        let expected = tokenizer_oracle(&snippet);
        assert_eq!(
            ours, expected,
            "snippet {i} diverges from the tokenizer:\n{snippet}"
        );
        assert_eq!(
            strip_comments(&ours),
            ours,
            "stripping snippet {i} twice changed it again"
        );
    }

    // Idempotence over every code cell in the fixture corpus.
    for fixture in FIXTURES {
        let parsed = parse_notebook(&fixture_bytes(fixture)).expect("fixture parses");
        for cell in parsed.cells.iter().filter(|c| c.kind == CellKind::Code) {
            let once = strip_comments(&cell.source);
            assert_eq!(
                strip_comments(&once),
                once,
                "{fixture}: cell {} is not idempotent under stripping",
                cell.index
            );
        }
    }
}

// ---------------------------------------------------------------------------
// 10. The whole pipeline runs offline on the corpus
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_mock_script_pipeline_runs_without_network() {
    for fixture in FIXTURES {
        let notebook = fixture_bytes(fixture);
        let dir = tempfile::tempdir().expect("tempdir");
        let nb_path = dir.path().join("notebook.ipynb");
        fs::write(&nb_path, &notebook).expect("notebook written");
        let script = identity_script_file(&notebook, dir.path());
        let out = dir.path().join("out");

        // Point every proxy variable at a dead port: if anything tried the
        // network it would fail loudly instead of completing.
        let output = codelift_binary()
            .arg("run")
            .arg(&nb_path)
            .arg("--out")
            .arg(&out)
            .arg("--mock-script")
            .arg(&script)
            .env("http_proxy", "http://127.0.0.1:9/")
            .env("https_proxy", "http://127.0.0.1:9/")
            .env("HTTP_PROXY", "http://127.0.0.1:9/")
            .env("HTTPS_PROXY", "http://127.0.0.1:9/")
            .env("ALL_PROXY", "http://127.0.0.1:9/")
            .env_remove("no_proxy")
            .env_remove("NO_PROXY")
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "{fixture}: offline run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(
            out.join("repo/.codelift-manifest.json").is_file(),
            "{fixture}: no manifest emitted"
        );
    }
}
