use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{estimate_tokens, request_chars, ChatRequest, ChatResponse, LlmClient, Phase, Role, ToolCall, Usage};
use crate::{Error, Result};

/// Optional check on the observation a turn responds to. All listed
/// substrings must occur and the regex (if any) must match.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationMatcher {
    pub contains: Vec<String>,
    pub regex: Option<String>,
}

impl ObservationMatcher {
    fn check(&self, turn: usize, observation: &str) -> Result<()> {
        for needle in &self.contains {
            if !observation.contains(needle.as_str()) {
                return Err(Error::TranscriptDrift {
                    turn,
                    expected: needle.clone(),
                    actual: observation.to_string(),
                });
            }
        }
        if let Some(pattern) = &self.regex {
            let re = Regex::new(pattern)
                .map_err(|e| Error::Config(format!("transcript turn {turn}: bad matcher regex: {e}")))?;
            if !re.is_match(observation) {
                return Err(Error::TranscriptDrift {
                    turn,
                    expected: pattern.clone(),
                    actual: observation.to_string(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedTurn {
    /// Phase this turn answers. Untagged turns answer any phase.
    pub phase: Option<Phase>,
    pub content: String,
    pub tool_calls: Vec<ScriptedCall>,
    pub expect: Option<ObservationMatcher>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Transcript {
    pub turns: Vec<ScriptedTurn>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Replays a transcript turn by turn. A request for a phase skips any turns
/// tagged with a different phase, so a transcript may script more search
/// turns than a run ends up consuming.
pub struct ScriptedClient {
    transcript: Transcript,
    cursor: usize,
    call_seq: usize,
}

impl ScriptedClient {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            transcript,
            cursor: 0,
            call_seq: 0,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(Transcript::load(path)?))
    }

    /// Index of the next unconsumed turn.
    pub fn position(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.transcript.turns.len() - self.cursor
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&mut self, request: &ChatRequest<'_>) -> Result<ChatResponse> {
        while let Some(turn) = self.transcript.turns.get(self.cursor) {
            if turn.phase.is_none_or(|p| p == request.phase) {
                break;
            }
            self.cursor += 1;
        }
        let index = self.cursor;
        let turn = self.transcript.turns.get(index).ok_or_else(|| {
            Error::Client(format!(
                "scripted transcript exhausted at a {:?} request",
                request.phase
            ))
        })?;
        self.cursor += 1;

        if let Some(matcher) = &turn.expect {
            let observation = request
                .messages
                .iter()
                .rev()
                .take_while(|m| m.role != Role::Assistant)
                .map(|m| m.content.as_str())
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect::<Vec<_>>()
                .join("\n");
            matcher.check(index, &observation)?;
        }

        let tool_calls = turn
            .tool_calls
            .iter()
            .map(|c| {
                self.call_seq += 1;
                ToolCall {
                    id: format!("call_{}", self.call_seq),
                    name: c.name.clone(),
                    arguments: c.arguments.clone(),
                }
            })
            .collect::<Vec<_>>();
        let out_chars = turn.content.clone() + &tool_calls.iter().map(|c| c.arguments.to_string()).collect::<String>();
        Ok(ChatResponse {
            content: turn.content.clone(),
            usage: Usage {
                input_tokens: (request_chars(request.messages) as u64).div_ceil(4),
                output_tokens: estimate_tokens(&out_chars),
            },
            tool_calls,
        })
    }
}
