//! Blocking client for OpenAI-compatible chat-completions endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatMessage, LlmError, Role, ToolCall, ToolSpec};

/// Where and how to reach the endpoint.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    /// Base URL, e.g. `https://api.openai.com`. A `/v1` suffix is
    /// tolerated; the chat-completions path is appended either way.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_seconds: u64,
}

impl EndpointConfig {
    pub fn new(base_url: &str, model: &str) -> EndpointConfig {
        EndpointConfig {
            base_url: base_url.to_string(),
            model: model.to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout_seconds: 120,
        }
    }
}

/// Chat backend over HTTP. Requests are retried on transport errors,
/// 429s, and 5xx responses with exponential backoff (1s base, factor 2,
/// 3 attempts total); auth and other client errors fail immediately.
pub struct HttpBackend {
    url: String,
    model: String,
    api_key: String,
    client: reqwest::blocking::Client,
    retry_base: Duration,
}

// Hand-written so the API key never lands in logs or panic messages.
impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .finish_non_exhaustive()
    }
}

const MAX_ATTEMPTS: u32 = 3;

impl HttpBackend {
    /// Builds the backend, resolving the API key now so a missing key
    /// fails before any pipeline work starts.
    pub fn new(config: &EndpointConfig) -> Result<HttpBackend, LlmError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            LlmError::Auth(format!(
                "environment variable `{}` is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            url: chat_completions_url(&config.base_url),
            model: config.model.clone(),
            api_key,
            client,
            retry_base: Duration::from_secs(1),
        })
    }

    #[cfg(test)]
    fn with_retry_base(mut self, base: Duration) -> HttpBackend {
        self.retry_base = base;
        self
    }

    fn request_body(&self, messages: &[ChatMessage], tools: &[ToolSpec]) -> Value {
        let wire_messages: Vec<Value> = messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": self.model,
            "messages": wire_messages,
            "temperature": 0,
        });
        if !tools.is_empty() {
            let wire_tools: Vec<Value> = tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": {
                            "name": t.name,
                            "description": t.description,
                            "parameters": t.parameters,
                        }
                    })
                })
                .collect();
            body["tools"] = Value::Array(wire_tools);
            body["tool_choice"] = json!("auto");
        }
        body
    }
}

impl ChatBackend for HttpBackend {
    fn chat(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
    ) -> Result<ChatMessage, LlmError> {
        let body = self.request_body(messages, tools);

        let mut last_failure: Option<LlmError> = None;
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.retry_base * 2u32.pow(attempt - 1));
            }
            let response = self
                .client
                .post(&self.url)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();

            match response {
                Err(e) => {
                    last_failure = Some(if e.is_timeout() {
                        LlmError::Timeout
                    } else {
                        LlmError::Transport(e.to_string())
                    });
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.as_u16() == 429 {
                        last_failure = Some(LlmError::RateLimited);
                    } else if status.is_server_error() {
                        last_failure =
                            Some(LlmError::Transport(format!("server error {status}")));
                    } else if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(LlmError::Auth(format!("endpoint returned {status}")));
                    } else if !status.is_success() {
                        let text = resp.text().unwrap_or_default();
                        return Err(LlmError::Protocol(format!("{status}: {text}")));
                    } else {
                        let value: Value = resp
                            .json()
                            .map_err(|e| LlmError::Protocol(e.to_string()))?;
                        return parse_reply(&value);
                    }
                }
            }
        }
        Err(last_failure.expect("at least one attempt ran"))
    }
}

fn chat_completions_url(base: &str) -> String {
    let trimmed = base.trim_end_matches('/');
    if trimmed.ends_with("/v1") {
        format!("{trimmed}/chat/completions")
    } else {
        format!("{trimmed}/v1/chat/completions")
    }
}

fn wire_message(message: &ChatMessage) -> Value {
    let role = match message.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut value = json!({ "role": role, "content": message.content });
    if let Some(calls) = &message.tool_calls {
        let wire_calls: Vec<Value> = calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments }
                })
            })
            .collect();
        value["tool_calls"] = Value::Array(wire_calls);
    }
    if let Some(call_id) = &message.tool_call_id {
        value["tool_call_id"] = json!(call_id);
    }
    value
}

fn parse_reply(value: &Value) -> Result<ChatMessage, LlmError> {
    let message = value
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|choices| choices.first())
        .and_then(|choice| choice.get("message"))
        .ok_or_else(|| LlmError::Protocol("response has no choices[0].message".to_string()))?;

    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();

    let tool_calls = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .map(|calls| {
            calls
                .iter()
                .enumerate()
                .map(|(i, call)| {
                    let function = call.get("function").cloned().unwrap_or_default();
                    ToolCall {
                        id: call
                            .get("id")
                            .and_then(Value::as_str)
                            .map(str::to_string)
                            .unwrap_or_else(|| format!("call_{i}")),
                        name: function
                            .get("name")
                            .and_then(Value::as_str)
                            .unwrap_or("")
                            .to_string(),
                        arguments: match function.get("arguments") {
                            Some(Value::String(s)) => s.clone(),
                            Some(other) => other.to_string(),
                            None => "{}".to_string(),
                        },
                    }
                })
                .collect::<Vec<_>>()
        })
        .filter(|calls| !calls.is_empty());

    Ok(ChatMessage {
        role: Role::Assistant,
        content,
        tool_calls,
        tool_call_id: None,
    })
}
