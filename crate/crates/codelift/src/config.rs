//! Run configuration: which backend to talk to, where to emit, and the
//! stage budgets. Values come from CLI flags, optionally backed by a flat
//! JSON config file; a flag always wins over the file.

use std::path::PathBuf;

use thiserror::Error;

use crate::agents::{DeveloperLimits, StructureLimits};
use crate::analysis::{LintConfig, Score};
use crate::llm::EndpointConfig;

/// Where replies come from.
#[derive(Debug, Clone)]
pub enum BackendChoice {
    /// A live OpenAI-compatible endpoint.
    Endpoint(EndpointConfig),
    /// A scripted-replies file (see [`crate::llm::BackendScript`]).
    MockScript(PathBuf),
}

/// Stage budgets for one run.
#[derive(Debug, Clone, Copy)]
pub struct RunLimits {
    /// Validation-tool rounds per cell in the developer stage.
    pub developer_rounds: usize,
    /// The lint score a refactor should reach.
    pub accept_score: Score,
    /// Tool rounds for the population conversation.
    pub populate_rounds: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        let developer = DeveloperLimits::default();
        RunLimits {
            developer_rounds: developer.max_rounds,
            accept_score: developer.accept_score,
            populate_rounds: StructureLimits::default().max_rounds,
        }
    }
}

impl RunLimits {
    pub fn developer(&self) -> DeveloperLimits {
        DeveloperLimits {
            max_rounds: self.developer_rounds,
            accept_score: self.accept_score,
        }
    }

    pub fn structure(&self) -> StructureLimits {
        StructureLimits {
            max_rounds: self.populate_rounds,
        }
    }
}

/// Everything `run` needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub backend: BackendChoice,
    /// Output directory; must be absent or empty before the run.
    pub out_dir: PathBuf,
    /// Write per-conversation transcripts under the output directory.
    pub trace: bool,
    pub limits: RunLimits,
    pub lint: LintConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file `{path}`: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("config file `{path}` is not valid: {detail}")]
    Invalid { path: String, detail: String },
}

/// The flat JSON config file. Every field mirrors a `run` flag and fills
/// in only when the flag is absent.
#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub mock_script: Option<PathBuf>,
    /// Accepts a JSON number or string; parsed exactly, so `"8.5"` means
    /// 17/2, not the nearest float.
    pub accept_score: Option<serde_json::Value>,
    pub max_rounds: Option<usize>,
    pub populate_rounds: Option<usize>,
    pub linter_cmd: Option<String>,
    pub trace: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<FileConfig, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| ConfigError::Invalid {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// The configured accept score, exactly parsed.
    pub fn accept_score(&self) -> Result<Option<Score>, ConfigError> {
        let Some(value) = &self.accept_score else {
            return Ok(None);
        };
        let text = match value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(ConfigError::Invalid {
                    path: "<accept_score>".to_string(),
                    detail: format!("accept_score must be a number or string, got {other}"),
                })
            }
        };
        parse_score(&text)
            .map(Some)
            .map_err(|detail| ConfigError::Invalid {
                path: "<accept_score>".to_string(),
                detail,
            })
    }
}

/// Parses a decimal score and insists it is already in range.
/// [`Score::parse_decimal`] clamps, which is right for linter output but
/// wrong for configuration — a clamped config value is almost certainly a
/// typo, so out-of-range input is refused instead.
pub fn parse_score(text: &str) -> Result<Score, String> {
    let score =
        Score::parse_decimal(text).ok_or_else(|| format!("`{text}` is not a decimal score"))?;
    let numeric: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` is not a decimal score"))?;
    if !(0.0..=10.0).contains(&numeric) {
        return Err(format!("`{text}` is outside the 0..=10 score range"));
    }
    Ok(score)
}
