//! The chat + tool-call contract between agents and a language model, with a
//! scripted implementation for offline replay and an HTTP adapter.

mod http;
mod scripted;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Result;

pub use http::HttpClient;
pub use scripted::{ObservationMatcher, ScriptedClient, ScriptedTurn, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// Which part of a run a request belongs to. Scripted transcripts use it to
/// route turns; HTTP clients ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Search,
    Filter1,
    Filter2,
    Resolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default)]
    pub id: String,
    pub name: String,
    /// Parsed arguments. Arguments that were not valid JSON arrive as a
    /// string and are rejected as a malformed call.
    #[serde(default)]
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn tool(call_id: &str, content: impl Into<String>) -> Self {
        Message {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.to_string()),
        }
    }

    pub fn assistant(reply: &ChatResponse) -> Self {
        Message {
            role: Role::Assistant,
            content: reply.content.clone(),
            tool_calls: reply.tool_calls.clone(),
            tool_call_id: None,
        }
    }

    fn plain(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }
}

pub struct ChatRequest<'a> {
    pub phase: Phase,
    pub messages: &'a [Message],
    /// Function schemas offered this turn; empty for plain-text turns.
    pub tools: &'a [Value],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub tool_calls: Vec<ToolCall>,
    pub usage: Usage,
}

pub trait LlmClient {
    fn complete(&mut self, request: &ChatRequest<'_>) -> Result<ChatResponse>;
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&mut self, request: &ChatRequest<'_>) -> Result<ChatResponse> {
        (**self).complete(request)
    }
}

/// Rough token estimate (4 characters per token) for clients that do not
/// report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub(crate) fn request_chars(messages: &[Message]) -> usize {
    messages
        .iter()
        .map(|m| {
            m.content.len()
                + m.tool_calls
                    .iter()
                    .map(|c| c.arguments.to_string().len())
                    .sum::<usize>()
        })
        .sum()
}
