//! Chat backends and the tool-calling loop.
//!
//! Every stage talks to a [`ChatBackend`]: either a live OpenAI-compatible
//! endpoint ([`HttpBackend`]) or a deterministic scripted replay
//! ([`ScriptBackend`]) for offline runs and tests. Requests are sequential
//! and temperature is pinned to zero, so a whole pipeline run is a pure
//! function of its inputs and the backend's replies.

mod http;
mod script;
mod tool_loop;

pub use http::{EndpointConfig, HttpBackend};
pub use script::{BackendScript, ScriptBackend, ScriptStep, ScriptToolCall};
pub use tool_loop::{run_tool_loop, ToolLoopError, ToolLoopOutcome, ToolRegistry};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited (HTTP 429) after retries")]
    RateLimited,
    #[error("request timed out after retries")]
    Timeout,
    #[error("transport failure after retries: {0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("scripted backend exhausted after {served} replies")]
    ScriptExhausted { served: usize },
    #[error("tool loop exceeded {limit} rounds")]
    RoundLimitExceeded { limit: usize },
    #[error("model called unregistered tool `{0}`")]
    UnknownTool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// One tool invocation requested by the model. `arguments` is the raw
/// JSON-encoded argument object, exactly as the model produced it.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: String,
}

/// One message in a conversation. The same shape serves as the transcript
/// record: serializing a `Vec<ChatMessage>` is the trace format.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCall>>,
    /// Set on `Role::Tool` messages: which call this result answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: &str) -> ChatMessage {
        ChatMessage {
            role: Role::System,
            content: content.to_string(),
            tool_calls: None,
            tool_call_id: None,
        }
    }

    pub fn user(content: &str) -> ChatMessage {
        ChatMessage {
            role: Role::User,
            content: content.to_string(),
            tool_calls: None,
            tool_call_id: None,
        }
    }

    pub fn assistant(content: &str) -> ChatMessage {
        ChatMessage {
            role: Role::Assistant,
            content: content.to_string(),
            tool_calls: None,
            tool_call_id: None,
        }
    }

    pub fn assistant_with_calls(content: &str, calls: Vec<ToolCall>) -> ChatMessage {
        ChatMessage {
            role: Role::Assistant,
            content: content.to_string(),
            tool_calls: if calls.is_empty() { None } else { Some(calls) },
            tool_call_id: None,
        }
    }

    pub fn tool(call_id: &str, content: &str) -> ChatMessage {
        ChatMessage {
            role: Role::Tool,
            content: content.to_string(),
            tool_calls: None,
            tool_call_id: Some(call_id.to_string()),
        }
    }

    pub fn has_tool_calls(&self) -> bool {
        self.tool_calls.as_ref().is_some_and(|c| !c.is_empty())
    }
}

/// A tool the model may call, in OpenAI function-tool terms.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON schema of the argument object.
    pub parameters: serde_json::Value,
}

/// A conversational backend. Implementations must be deterministic for a
/// fixed message sequence (the HTTP backend delegates that to the
/// endpoint by pinning temperature to zero).
pub trait ChatBackend {
    fn chat(&mut self, messages: &[ChatMessage], tools: &[ToolSpec])
        -> Result<ChatMessage, LlmError>;
}
