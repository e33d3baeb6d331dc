//! Deterministic scripted backend: replays a fixed list of assistant
//! replies, ignoring the incoming messages. Used for offline pipeline
//! runs, golden tests, and anywhere reproducibility matters more than
//! intelligence.

use serde_json::Value;

use super::{ChatBackend, ChatMessage, LlmError, ToolCall, ToolSpec};

/// One scripted tool call. `arguments` may be written either as a JSON
/// object (the natural form) or as a pre-encoded string.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScriptToolCall {
    pub name: String,
    #[serde(alias = "args")]
    pub arguments: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

/// One scripted assistant reply.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct ScriptStep {
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ScriptToolCall>,
}

impl ScriptStep {
    pub fn text(content: impl Into<String>) -> ScriptStep {
        ScriptStep {
            content: content.into(),
            tool_calls: Vec::new(),
        }
    }

    pub fn call(name: &str, arguments: Value) -> ScriptToolCall {
        ScriptToolCall {
            name: name.to_string(),
            arguments,
            id: None,
        }
    }
}

/// A whole scripted conversation, in reply order.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct BackendScript {
    pub steps: Vec<ScriptStep>,
}

impl BackendScript {
    pub fn new(steps: Vec<ScriptStep>) -> BackendScript {
        BackendScript { steps }
    }

    pub fn from_json(raw: &str) -> Result<BackendScript, serde_json::Error> {
        serde_json::from_str(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

/// Replays a [`BackendScript`] step by step.
pub struct ScriptBackend {
    steps: std::vec::IntoIter<ScriptStep>,
    served: usize,
    strict: bool,
}

impl ScriptBackend {
    /// `strict` decides what an exhausted script does: error out, or keep
    /// serving empty replies (which ends any loop naturally).
    pub fn new(script: BackendScript, strict: bool) -> ScriptBackend {
        ScriptBackend {
            steps: script.steps.into_iter(),
            served: 0,
            strict,
        }
    }

    /// Replies served so far.
    pub fn served(&self) -> usize {
        self.served
    }
}

impl ChatBackend for ScriptBackend {
    fn chat(
        &mut self,
        _messages: &[ChatMessage],
        _tools: &[ToolSpec],
    ) -> Result<ChatMessage, LlmError> {
        let step = match self.steps.next() {
            Some(step) => step,
            None if self.strict => {
                return Err(LlmError::ScriptExhausted {
                    served: self.served,
                })
            }
            None => return Ok(ChatMessage::assistant("")),
        };
        let step_index = self.served;
        self.served += 1;

        let calls: Vec<ToolCall> = step
            .tool_calls
            .into_iter()
            .enumerate()
            .map(|(i, call)| ToolCall {
                // Synthesized ids are deterministic: step index, then
                // position within the step.
                id: call.id.unwrap_or_else(|| format!("call_{step_index}_{i}")),
                name: call.name,
                arguments: match call.arguments {
                    Value::String(s) => s,
                    other => other.to_string(),
                },
            })
            .collect();

        Ok(ChatMessage::assistant_with_calls(&step.content, calls))
    }
}
