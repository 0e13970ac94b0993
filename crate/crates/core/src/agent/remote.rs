//! Chat-completions client for remote model endpoints.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Agent, AgentError, Decision, DecisionInput, Endpoint, InterfaceKind};
use crate::kernel::RoleDefinition;

pub struct RemoteAgent {
    endpoint: Endpoint,
    interface: InterfaceKind,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

/// Function declarations offered to structured-call models.
pub fn tool_declarations(interface: InterfaceKind, role: &RoleDefinition) -> Value {
    match interface {
        InterfaceKind::Generalist => Value::Array(
            role.semantic
                .controls()
                .iter()
                .map(|c| {
                    let props: serde_json::Map<String, Value> = c
                        .required_args
                        .iter()
                        .map(|a| (a.clone(), json!({"type": "string"})))
                        .collect();
                    json!({
                        "type": "function",
                        "function": {
                            "name": c.id,
                            "description": c.description,
                            "parameters": {"type": "object", "properties": props, "required": c.required_args},
                        }
                    })
                })
                .collect(),
        ),
        InterfaceKind::ComputerUse => json!([{
            "type": "function",
            "function": {
                "name": "computer_use",
                "description": "Perform one keyboard or mouse action.",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "action": {"type": "string", "enum": ["key", "left_click", "right_click", "wait"]},
                        "keys": {"type": "array", "items": {"type": "string"}},
                        "coordinate": {"type": "array", "items": {"type": "integer"}},
                        "duration": {"type": "number"},
                    },
                    "required": ["action"],
                },
            }
        }]),
    }
}

impl RemoteAgent {
    pub fn new(endpoint: Endpoint, interface: InterfaceKind) -> Result<Self, AgentError> {
        let token = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| AgentError::MissingCredential(var.clone()))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_s))
            .build()
            .map_err(|e| AgentError::Unreachable(e.to_string()))?;
        Ok(Self {
            endpoint,
            interface,
            token,
            client,
        })
    }

    fn request_body(&self, input: &DecisionInput<'_>, structured: bool) -> Value {
        let mut body = json!({
            "model": self.endpoint.model,
            "messages": input.bundle.messages(),
            "temperature": 0,
        });
        if let Some(m) = self.endpoint.max_tokens {
            body["max_tokens"] = json!(m);
        }
        if structured {
            body["tools"] = tool_declarations(self.interface, input.role);
        }
        body
    }

    fn post(&self, body: &Value) -> Result<Value, AgentError> {
        let mut req = self.client.post(&self.endpoint.url).json(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                AgentError::Timeout(self.endpoint.timeout_s)
            } else {
                AgentError::Unreachable(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| AgentError::BadReply(e.to_string()))?;
        if !status.is_success() {
            return Err(AgentError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| AgentError::BadReply(e.to_string()))
    }

    /// The reply verbatim: the assistant message record for structured
    /// calls, its text content otherwise.
    fn extract(reply: &Value, structured: bool) -> Result<String, AgentError> {
        let msg = reply
            .pointer("/choices/0/message")
            .ok_or_else(|| AgentError::BadReply("no choices[0].message".into()))?;
        if structured {
            return Ok(crate::canonical::to_canonical_string(msg));
        }
        Ok(match msg.get("content") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(parts)) => parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
            _ => String::new(),
        })
    }
}

impl Agent for RemoteAgent {
    fn decide(&mut self, input: &DecisionInput<'_>) -> Decision {
        use crate::parse::OutputFormat;
        let structured = matches!(input.format, OutputFormat::StructuredCall);
        let body = self.request_body(input, structured);
        let started = Instant::now();
        // One retry on transport failure; HTTP errors are not retried.
        let result = match self.post(&body) {
            Err(AgentError::Unreachable(e)) => {
                tracing::debug!(error = %e, "endpoint unreachable, retrying once");
                self.post(&body)
            }
            other => other,
        }
        .and_then(|v| Self::extract(&v, structured));
        let latency_ms = started.elapsed().as_millis() as u64;
        match result {
            Ok(text) => Decision {
                text,
                latency_ms,
                error: None,
            },
            Err(e) => Decision {
                text: String::new(),
                latency_ms,
                error: Some(e.to_string()),
            },
        }
    }
}
