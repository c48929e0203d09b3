use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, LlmClient, Message, Role, ToolCall, Usage};
use crate::config::ClientConfig;
use crate::{Error, Result};

/// Adapter for chat-completions style endpoints: POSTs
/// `{model, temperature, messages, tools}` and reads `choices[0].message`
/// with optional `tool_calls` and `usage`.
pub struct HttpClient {
    http: reqwest::blocking::Client,
    config: ClientConfig,
    api_key: Option<String>,
}

impl HttpClient {
    pub fn new(config: &ClientConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Client(e.to_string()))?;
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty());
        Ok(Self {
            http,
            config: config.clone(),
            api_key,
        })
    }

    fn body(&self, request: &ChatRequest<'_>) -> Value {
        let messages: Vec<Value> = request.messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        if !request.tools.is_empty() {
            body["tools"] = Value::Array(
                request
                    .tools
                    .iter()
                    .map(|schema| json!({"type": "function", "function": schema}))
                    .collect(),
            );
        }
        body
    }

    fn send_once(&self, body: &Value) -> Result<ChatResponse> {
        let mut req = self.http.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Client(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Client(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Client(format!("endpoint returned {status}: {text}")));
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Client(format!("response is not JSON: {e}")))?;
        parse_response(&value)
    }
}

fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({"role": role, "content": m.content});
    if !m.tool_calls.is_empty() {
        v["tool_calls"] = Value::Array(
            m.tool_calls
                .iter()
                .map(|c| {
                    json!({
                        "id": c.id,
                        "type": "function",
                        "function": {"name": c.name, "arguments": c.arguments.to_string()},
                    })
                })
                .collect(),
        );
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

pub(crate) fn parse_response(value: &Value) -> Result<ChatResponse> {
    let message = value
        .pointer("/choices/0/message")
        .ok_or_else(|| Error::Client("response has no choices[0].message".into()))?;
    let content = message["content"].as_str().unwrap_or_default().to_string();
    let tool_calls = message["tool_calls"]
        .as_array()
        .map(|calls| {
            calls
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let raw = &c["function"]["arguments"];
                    let arguments = match raw {
                        Value::String(s) => serde_json::from_str(s).unwrap_or_else(|_| raw.clone()),
                        other => other.clone(),
                    };
                    ToolCall {
                        id: c["id"].as_str().map_or_else(|| format!("call_{i}"), str::to_string),
                        name: c["function"]["name"].as_str().unwrap_or_default().to_string(),
                        arguments,
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    let usage = Usage {
        input_tokens: value
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        output_tokens: value
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ChatResponse {
        content,
        tool_calls,
        usage,
    })
}

impl LlmClient for HttpClient {
    fn complete(&mut self, request: &ChatRequest<'_>) -> Result<ChatResponse> {
        let body = self.body(request);
        let mut last = None;
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(250 * attempt as u64));
            }
            match self.send_once(&body) {
                Ok(r) => return Ok(r),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Client("no attempt made".into())))
    }
}
