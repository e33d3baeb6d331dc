//! Code-quality scoring on the pylint 0–10 scale.
//!
//! An external linter can be plugged in via [`LintConfig::linter_cmd`];
//! its report is parsed for the familiar `rated at <score>/10` line. When
//! no linter is configured (or the configured one is unavailable and not
//! required), a small builtin scorer produces a deterministic score from
//! three checks: unused imports, over-long lines, and shadowed builtins.
//!
//! Scores are exact rationals, not floats: a deduction of three tenths is
//! exactly 3/10, and equal scores compare equal.

use std::fmt;
use std::io::Read;
use std::io::Write as _;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use super::bindings::analyze;
use super::syntax::check_syntax;

/// A lint score in `[0, 10]`, held as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Score(Rational64);

impl Score {
    pub const ZERO: Score = Score(Rational64::new_raw(0, 1));
    pub const MAX: Score = Score(Rational64::new_raw(10, 1));

    /// Builds a score from a rational, clamping into `[0, 10]`.
    pub fn from_rational(value: Rational64) -> Score {
        let ten = Rational64::new(10, 1);
        Score(value.max(Rational64::zero()).min(ten))
    }

    /// Parses a decimal like `8.33` or `-2.5` exactly (no float rounding),
    /// then clamps into `[0, 10]`.
    pub fn parse_decimal(text: &str) -> Option<Score> {
        let text = text.trim();
        let (sign, digits) = match text.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1, text.strip_prefix('+').unwrap_or(text)),
        };
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        let mut numer: i64 = 0;
        let mut denom: i64 = 1;
        for ch in int_part.chars().chain(frac_part.chars()) {
            let digit = ch.to_digit(10)? as i64;
            numer = numer.checked_mul(10)?.checked_add(digit)?;
        }
        for _ in 0..frac_part.len() {
            denom = denom.checked_mul(10)?;
        }
        Some(Score::from_rational(Rational64::new(sign * numer, denom)))
    }

    pub fn as_rational(&self) -> Rational64 {
        self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(0.0)
    }

    fn saturating_sub(self, deduction: Rational64) -> Score {
        Score::from_rational(self.0 - deduction)
    }
}

impl fmt::Display for Score {
    /// Renders exactly: integers bare (`10`), otherwise the shortest
    /// decimal when the denominator divides a power of ten (`8.5`,
    /// `9.17`), falling back to `numer/denom` notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let reduced = self.0.reduced();
        let numer = *reduced.numer();
        let denom = *reduced.denom();
        if denom == 1 {
            return write!(f, "{numer}");
        }
        let mut rest = denom;
        let mut twos = 0u32;
        let mut fives = 0u32;
        while rest % 2 == 0 {
            rest /= 2;
            twos += 1;
        }
        while rest % 5 == 0 {
            rest /= 5;
            fives += 1;
        }
        if rest != 1 {
            return write!(f, "{numer}/{denom}");
        }
        let k = twos.max(fives);
        let pow10 = 10i64.pow(k);
        let scaled = numer * (pow10 / denom);
        let sign = if scaled < 0 { "-" } else { "" };
        let whole = (scaled / pow10).abs();
        let frac = (scaled % pow10).abs();
        let frac_str = format!("{frac:0width$}", width = k as usize);
        let frac_str = frac_str.trim_end_matches('0');
        if frac_str.is_empty() {
            write!(f, "{sign}{whole}")
        } else {
            write!(f, "{sign}{whole}.{frac_str}")
        }
    }
}

impl serde::Serialize for Score {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Convention,
}

/// One lint finding.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct LintMessage {
    pub severity: Severity,
    pub line: usize,
    pub code: String,
    pub text: String,
}

/// How validation should score code.
#[derive(Debug, Clone)]
pub struct LintConfig {
    /// External linter command; the temp file path is appended as the last
    /// argument. `None` selects the builtin scorer.
    pub linter_cmd: Option<String>,
    /// With `true`, an unavailable external linter is an error instead of
    /// a silent fallback to the builtin scorer.
    pub require_external: bool,
    pub timeout_seconds: u64,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig {
            linter_cmd: None,
            require_external: false,
            timeout_seconds: 30,
        }
    }
}

/// Result of validating one piece of code.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub score: Score,
    pub syntactically_valid: bool,
    pub messages: Vec<LintMessage>,
}

#[derive(Debug, Error)]
pub enum LintError {
    #[error("external linter unavailable: {reason}")]
    LinterUnavailable { reason: String },
}

/// Scores a piece of Python code. Zero is reserved: invalid code always
/// scores exactly 0, and valid code never does — a valid candidate whose
/// findings wipe out its score floors at 0.1 instead, whichever scorer
/// ran. `score == 0` therefore always means "does not parse".
pub fn validate_code(source: &str, config: &LintConfig) -> Result<ValidationReport, LintError> {
    let syntax = check_syntax(source);

    if let Some(cmd) = &config.linter_cmd {
        match run_external(cmd, source, Duration::from_secs(config.timeout_seconds)) {
            Ok(mut report) => {
                if syntax.is_err() {
                    report.score = Score::ZERO;
                    report.syntactically_valid = false;
                } else {
                    report.syntactically_valid = true;
                }
                reserve_zero(&mut report);
                return Ok(report);
            }
            Err(reason) if config.require_external => {
                return Err(LintError::LinterUnavailable { reason });
            }
            Err(reason) => {
                log::warn!("external linter unavailable ({reason}); using builtin scorer");
            }
        }
    }

    let mut report = builtin_report(source, syntax);
    reserve_zero(&mut report);
    Ok(report)
}

/// Keeps 0 unambiguous: syntactically valid code is lifted to 0.1 when
/// deductions (or an external linter) drove it all the way down.
fn reserve_zero(report: &mut ValidationReport) {
    if report.syntactically_valid && report.score == Score::ZERO {
        report.score = Score::from_rational(Rational64::new(1, 10));
    }
}

/// Runs the configured linter over the code (via a temp file) and parses
/// its report. Any failure to obtain a score line is "unavailable".
fn run_external(cmd: &str, source: &str, timeout: Duration) -> Result<ValidationReport, String> {
    let mut parts = cmd.split_whitespace();
    let program = parts.next().ok_or("empty linter command")?;
    let args: Vec<&str> = parts.collect();

    let mut file = tempfile::Builder::new()
        .prefix("codelift-lint-")
        .suffix(".py")
        .tempfile()
        .map_err(|e| format!("cannot create temp file: {e}"))?;
    file.write_all(source.as_bytes())
        .map_err(|e| format!("cannot write temp file: {e}"))?;
    file.flush().map_err(|e| format!("cannot flush temp file: {e}"))?;

    let mut child = Command::new(program)
        .args(&args)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot spawn `{program}`: {e}"))?;

    // Drain the pipes on threads so a chatty linter cannot deadlock on a
    // full pipe buffer while we wait.
    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stdout_thread = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout_pipe.read_to_string(&mut buf);
        buf
    });
    let stderr_thread = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(format!("timed out after {}s", timeout.as_secs()));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(format!("wait failed: {e}")),
        }
    };

    let stdout = stdout_thread.join().unwrap_or_default();
    let _ = stderr_thread.join();

    let score = parse_score_line(&stdout);
    match score {
        Some(score) => Ok(ValidationReport {
            score,
            syntactically_valid: true, // overwritten by the caller
            messages: parse_report_messages(&stdout),
        }),
        None => Err(if status.success() {
            "report has no `rated at <score>/10` line".to_string()
        } else {
            format!("exit status {status} and no `rated at <score>/10` line")
        }),
    }
}

fn parse_score_line(stdout: &str) -> Option<Score> {
    let re = regex::Regex::new(r"rated at (-?[0-9]+(?:\.[0-9]+)?)/10").unwrap();
    let captures = re.captures(stdout)?;
    Score::parse_decimal(&captures[1])
}

/// Best-effort extraction of `file:line:col: CODE: text` findings from a
/// pylint-style report.
fn parse_report_messages(stdout: &str) -> Vec<LintMessage> {
    let re = regex::Regex::new(r"^[^:\n]+:(\d+):\d+: ([A-Z]\d{4}): (.+)$").unwrap();
    let mut messages = Vec::new();
    for line in stdout.lines() {
        if let Some(cap) = re.captures(line) {
            let code = cap[2].to_string();
            let severity = match code.as_bytes()[0] {
                b'E' | b'F' => Severity::Error,
                b'W' => Severity::Warning,
                _ => Severity::Convention,
            };
            messages.push(LintMessage {
                severity,
                line: cap[1].parse().unwrap_or(0),
                code,
                text: cap[3].to_string(),
            });
        }
    }
    messages.sort_by(|a, b| (a.line, &a.code).cmp(&(b.line, &b.code)));
    messages
}

/// Builtin scorer: 10 minus 1/2 per unused import, 1/10 per line over 120
/// characters, and 1/2 per shadowed builtin; floored at 0. Invalid code
/// scores 0 with a single syntax-error message.
fn builtin_report(
    source: &str,
    syntax: Result<(), super::syntax::SyntaxDiagnosis>,
) -> ValidationReport {
    let diagnosis = match syntax {
        Ok(()) => None,
        Err(d) => Some(d),
    };
    if let Some(d) = diagnosis {
        return ValidationReport {
            score: Score::ZERO,
            syntactically_valid: false,
            messages: vec![LintMessage {
                severity: Severity::Error,
                line: d.line,
                code: "syntax-error".to_string(),
                text: d.message,
            }],
        };
    }

    let analysis = analyze(source).expect("source already parsed once");
    let mut messages = Vec::new();
    let mut score = Score::MAX;
    let half = Rational64::new(1, 2);
    let tenth = Rational64::new(1, 10);

    for import in &analysis.imports {
        if !analysis.all_loads.contains(&import.alias) {
            score = score.saturating_sub(half);
            messages.push(LintMessage {
                severity: Severity::Warning,
                line: import.line,
                code: "unused-import".to_string(),
                text: format!("imported name `{}` is never used", import.alias),
            });
        }
    }

    for (i, line) in source.lines().enumerate() {
        let width = line.chars().count();
        if width > 120 {
            score = score.saturating_sub(tenth);
            messages.push(LintMessage {
                severity: Severity::Convention,
                line: i + 1,
                code: "line-too-long".to_string(),
                text: format!("line is {width} characters (limit 120)"),
            });
        }
    }

    for name in &analysis.bindings.defined {
        if PYTHON_BUILTINS.contains(&name.as_str()) {
            score = score.saturating_sub(half);
            messages.push(LintMessage {
                severity: Severity::Warning,
                line: analysis.first_def_line.get(name).copied().unwrap_or(1),
                code: "shadowed-builtin".to_string(),
                text: format!("`{name}` shadows a Python builtin"),
            });
        }
    }

    messages.sort_by(|a, b| (a.line, &a.code, &a.text).cmp(&(b.line, &b.code, &b.text)));
    ValidationReport {
        score,
        syntactically_valid: true,
        messages,
    }
}

/// Names bound in Python's builtins module (3.11), minus dunders and the
/// unassignable keywords `True`/`False`/`None`.
static PYTHON_BUILTINS: &[&str] = &[
    "ArithmeticError", "AssertionError", "AttributeError", "BaseException",
    "BaseExceptionGroup", "BlockingIOError", "BrokenPipeError", "BufferError",
    "BytesWarning", "ChildProcessError", "ConnectionAbortedError", "ConnectionError",
    "ConnectionRefusedError", "ConnectionResetError", "DeprecationWarning", "EOFError",
    "Ellipsis", "EncodingWarning", "EnvironmentError", "Exception", "ExceptionGroup",
    "FileExistsError", "FileNotFoundError", "FloatingPointError", "FutureWarning",
    "GeneratorExit", "IOError", "ImportError", "ImportWarning", "IndentationError",
    "IndexError", "InterruptedError", "IsADirectoryError", "KeyError", "KeyboardInterrupt",
    "LookupError", "MemoryError", "ModuleNotFoundError", "NameError", "NotADirectoryError",
    "NotImplemented", "NotImplementedError", "OSError", "OverflowError",
    "PendingDeprecationWarning", "PermissionError", "ProcessLookupError", "RecursionError",
    "ReferenceError", "ResourceWarning", "RuntimeError", "RuntimeWarning",
    "StopAsyncIteration", "StopIteration", "SyntaxError", "SyntaxWarning", "SystemError",
    "SystemExit", "TabError", "TimeoutError", "TypeError", "UnboundLocalError",
    "UnicodeDecodeError", "UnicodeEncodeError", "UnicodeError", "UnicodeTranslateError",
    "UnicodeWarning", "UserWarning", "ValueError", "Warning", "ZeroDivisionError",
    "abs", "aiter", "all", "anext", "any", "ascii", "bin", "bool", "breakpoint",
    "bytearray", "bytes", "callable", "chr", "classmethod", "compile", "complex",
    "copyright", "credits", "delattr", "dict", "dir", "divmod", "enumerate", "eval",
    "exec", "exit", "filter", "float", "format", "frozenset", "getattr", "globals",
    "hasattr", "hash", "help", "hex", "id", "input", "int", "isinstance", "issubclass",
    "iter", "len", "license", "list", "locals", "map", "max", "memoryview", "min",
    "next", "object", "oct", "open", "ord", "pow", "print", "property", "quit", "range",
    "repr", "reversed", "round", "set", "setattr", "slice", "sorted", "staticmethod",
    "str", "sum", "super", "tuple", "type", "vars", "zip",
];
