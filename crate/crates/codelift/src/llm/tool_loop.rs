//! Generic tool-calling loop: send messages, execute the tool calls the
//! model makes, feed results back, repeat until the model answers in
//! plain text or the round budget runs out.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{ChatBackend, ChatMessage, LlmError, ToolSpec};

/// Executes one tool. Gets the parsed argument object; returns the tool
/// result content, or a message describing why the call was rejected
/// (which is fed back to the model, not raised).
pub type ToolExecutor<'a> = Box<dyn FnMut(&Value) -> Result<String, String> + 'a>;

/// The tools offered to the model for one loop, with their executors.
#[derive(Default)]
pub struct ToolRegistry<'a> {
    specs: Vec<ToolSpec>,
    executors: BTreeMap<String, ToolExecutor<'a>>,
}

impl<'a> ToolRegistry<'a> {
    pub fn new() -> ToolRegistry<'a> {
        ToolRegistry {
            specs: Vec::new(),
            executors: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: &str,
        description: &str,
        parameters: Value,
        executor: ToolExecutor<'a>,
    ) {
        self.specs.push(ToolSpec {
            name: name.to_string(),
            description: description.to_string(),
            parameters,
        });
        self.executors.insert(name.to_string(), executor);
    }

    pub fn specs(&self) -> &[ToolSpec] {
        &self.specs
    }
}

/// Successful loop result.
#[derive(Debug)]
pub struct ToolLoopOutcome {
    /// The model's final plain-text message.
    pub final_message: ChatMessage,
    /// Everything exchanged: the input messages plus every assistant and
    /// tool message, in order.
    pub transcript: Vec<ChatMessage>,
    /// Tool rounds executed (one round = one assistant message whose
    /// calls were all executed).
    pub rounds_used: usize,
}

/// Loop failure; carries the transcript so far so callers can still
/// trace or salvage partial work.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct ToolLoopError {
    pub error: LlmError,
    pub transcript: Vec<ChatMessage>,
}

/// Runs the loop. Per round: the assistant message is appended, every
/// call is executed in order, and each result is appended as a tool
/// message. A reply without tool calls ends the loop. A reply **with**
/// calls after `max_rounds` rounds have already run fails with
/// `RoundLimitExceeded` — so executors run at most `max_rounds` times.
/// Calling an unregistered tool is an error; arguments that fail to parse
/// are reported back to the model instead.
pub fn run_tool_loop(
    backend: &mut dyn ChatBackend,
    messages: Vec<ChatMessage>,
    registry: &mut ToolRegistry,
    max_rounds: usize,
) -> Result<ToolLoopOutcome, ToolLoopError> {
    let mut transcript = messages;
    let mut rounds_used = 0;

    loop {
        let reply = match backend.chat(&transcript, registry.specs()) {
            Ok(reply) => reply,
            Err(error) => {
                return Err(ToolLoopError {
                    error,
                    transcript,
                })
            }
        };
        transcript.push(reply.clone());

        let calls = match &reply.tool_calls {
            Some(calls) if !calls.is_empty() => calls.clone(),
            _ => {
                return Ok(ToolLoopOutcome {
                    final_message: reply,
                    transcript,
                    rounds_used,
                })
            }
        };

        if rounds_used >= max_rounds {
            return Err(ToolLoopError {
                error: LlmError::RoundLimitExceeded { limit: max_rounds },
                transcript,
            });
        }

        // Validate all names before executing anything, so a batch with an
        // unknown tool has no side effects.
        for call in &calls {
            if !registry.executors.contains_key(&call.name) {
                return Err(ToolLoopError {
                    error: LlmError::UnknownTool(call.name.clone()),
                    transcript,
                });
            }
        }

        for call in &calls {
            let content = match serde_json::from_str::<Value>(&call.arguments) {
                Err(e) => json!({ "error": format!("invalid arguments JSON: {e}") }).to_string(),
                Ok(args) => {
                    let executor = registry
                        .executors
                        .get_mut(&call.name)
                        .expect("name validated above");
                    match executor(&args) {
                        Ok(result) => result,
                        Err(message) => json!({ "error": message }).to_string(),
                    }
                }
            };
            transcript.push(ChatMessage::tool(&call.id, &content));
        }
        rounds_used += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendScript, Role, ScriptBackend, ScriptStep};
    use std::cell::RefCell;

    fn echo_registry<'a>(log: &'a RefCell<Vec<String>>) -> ToolRegistry<'a> {
        let mut registry = ToolRegistry::new();
        registry.register(
            "echo",
            "echoes its input",
            json!({"type": "object", "properties": {"text": {"type": "string"}}}),
            Box::new(move |args| {
                let text = args
                    .get("text")
                    .and_then(Value::as_str)
                    .ok_or("missing `text`")?
                    .to_string();
                log.borrow_mut().push(text.clone());
                Ok(json!({ "echoed": text }).to_string())
            }),
        );
        registry
    }

    #[test]
    fn call_then_answer_builds_four_message_transcript() {
        let log = RefCell::new(Vec::new());
        let mut registry = echo_registry(&log);
        let script = BackendScript::new(vec![
            ScriptStep {
                content: String::new(),
                tool_calls: vec![ScriptStep::call("echo", json!({"text": "hi"}))],
            },
            ScriptStep::text("done"),
        ]);
        let mut backend = ScriptBackend::new(script, true);

        let outcome = run_tool_loop(
            &mut backend,
            vec![ChatMessage::user("go")],
            &mut registry,
            4,
        )
        .unwrap();

        assert_eq!(outcome.final_message.content, "done");
        assert_eq!(outcome.rounds_used, 1);
        assert_eq!(log.borrow().as_slice(), ["hi"]);
        let roles: Vec<Role> = outcome.transcript.iter().map(|m| m.role).collect();
        assert_eq!(roles, vec![Role::User, Role::Assistant, Role::Tool, Role::Assistant]);
        assert_eq!(
            outcome.transcript[2].tool_call_id.as_deref(),
            Some("call_0_0")
        );
    }

    #[test]
    fn runaway_loop_stops_after_exactly_max_rounds_executions() {
        let log = RefCell::new(Vec::new());
        let mut registry = echo_registry(&log);
        // Every reply calls the tool again, forever (script long enough
        // to outlast the budget).
        let steps: Vec<ScriptStep> = (0..10)
            .map(|i| ScriptStep {
                content: String::new(),
                tool_calls: vec![ScriptStep::call("echo", json!({"text": format!("r{i}")}))],
            })
            .collect();
        let mut backend = ScriptBackend::new(BackendScript::new(steps), true);

        let err = run_tool_loop(
            &mut backend,
            vec![ChatMessage::user("go")],
            &mut registry,
            3,
        )
        .unwrap_err();

        assert!(matches!(
            err.error,
            LlmError::RoundLimitExceeded { limit: 3 }
        ));
        // The executor ran exactly three times before the limit tripped.
        assert_eq!(log.borrow().len(), 3);
        // Transcript still has the work so far: user + 4 assistant + 3 tool.
        assert_eq!(err.transcript.len(), 8);
    }

    #[test]
    fn unknown_tool_fails_without_executing_the_batch() {
        let log = RefCell::new(Vec::new());
        let mut registry = echo_registry(&log);
        let script = BackendScript::new(vec![ScriptStep {
            content: String::new(),
            tool_calls: vec![
                ScriptStep::call("echo", json!({"text": "first"})),
                ScriptStep::call("mystery", json!({})),
            ],
        }]);
        let mut backend = ScriptBackend::new(script, true);

        let err = run_tool_loop(
            &mut backend,
            vec![ChatMessage::user("go")],
            &mut registry,
            4,
        )
        .unwrap_err();

        assert!(matches!(err.error, LlmError::UnknownTool(name) if name == "mystery"));
        assert!(log.borrow().is_empty(), "no call in the batch may run");
    }

    #[test]
    fn malformed_arguments_are_reported_back_not_raised() {
        let log = RefCell::new(Vec::new());
        let mut registry = echo_registry(&log);
        let script = BackendScript::new(vec![
            ScriptStep {
                content: String::new(),
                tool_calls: vec![crate::llm::ScriptToolCall {
                    name: "echo".to_string(),
                    arguments: Value::String("{not json".to_string()),
                    id: None,
                }],
            },
            ScriptStep::text("ok"),
        ]);
        let mut backend = ScriptBackend::new(script, true);

        let outcome = run_tool_loop(
            &mut backend,
            vec![ChatMessage::user("go")],
            &mut registry,
            4,
        )
        .unwrap();

        assert!(log.borrow().is_empty());
        let tool_msg = &outcome.transcript[2];
        assert_eq!(tool_msg.role, Role::Tool);
        assert!(tool_msg.content.contains("invalid arguments JSON"));
        assert_eq!(outcome.final_message.content, "ok");
    }

    #[test]
    fn executor_rejection_becomes_error_payload() {
        let log = RefCell::new(Vec::new());
        let mut registry = echo_registry(&log);
        let script = BackendScript::new(vec![
            ScriptStep {
                content: String::new(),
                // Valid JSON, wrong shape: executor rejects it.
                tool_calls: vec![ScriptStep::call("echo", json!({"wrong": 1}))],
            },
            ScriptStep::text("ok"),
        ]);
        let mut backend = ScriptBackend::new(script, true);

        let outcome = run_tool_loop(
            &mut backend,
            vec![ChatMessage::user("go")],
            &mut registry,
            4,
        )
        .unwrap();

        let tool_msg = &outcome.transcript[2];
        assert_eq!(
            tool_msg.content,
            json!({"error": "missing `text`"}).to_string()
        );
    }

    #[test]
    fn immediate_answer_uses_zero_rounds() {
        let mut registry = ToolRegistry::new();
        let mut backend =
            ScriptBackend::new(BackendScript::new(vec![ScriptStep::text("direct")]), true);
        let outcome = run_tool_loop(
            &mut backend,
            vec![ChatMessage::user("go")],
            &mut registry,
            1,
        )
        .unwrap();
        assert_eq!(outcome.rounds_used, 0);
        assert_eq!(outcome.transcript.len(), 2);
    }
}
