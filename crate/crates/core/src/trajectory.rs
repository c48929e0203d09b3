//! Per-run records of tool invocations, token counters, search depth and
//! resolution behavior flags.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::{Phase, Usage};
use crate::search::tool::ReturnedUnit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub turn: usize,
    pub phase: Phase,
    pub name: String,
    pub args: Value,
    pub ok: bool,
    /// Set for calls rejected before execution (unknown tool, bad arguments).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub malformed: bool,
    pub response_chars: usize,
    /// Units a search tool returned, with their child ids.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub units: Vec<ReturnedUnit>,
    /// Descent depth of the hit (search tools only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// State change a resolution tool reported (`branch_started`,
    /// `reverted`, `expanded`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorFlags {
    pub multi_hypothesis: bool,
    pub reversion: bool,
    pub expansion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTokens {
    pub turn: usize,
    pub phase: Phase,
    pub input: u64,
    pub output: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub invocations: Vec<Invocation>,
    pub tokens: Vec<TurnTokens>,
    /// Deepest descent reached per explored unit id.
    pub path_depths: BTreeMap<String, usize>,
    pub max_depth: usize,
    pub search_iterations: usize,
    pub turns: usize,
    pub hypothesis_count: usize,
    pub flags: BehaviorFlags,
    pub warnings: Vec<String>,
    #[serde(default)]
    pub degraded: bool,
}

impl Trajectory {
    pub fn record_turn(&mut self, phase: Phase, usage: Usage) -> usize {
        self.turns += 1;
        self.tokens.push(TurnTokens {
            turn: self.turns,
            phase,
            input: usage.input_tokens,
            output: usage.output_tokens,
        });
        self.turns
    }

    pub fn total_tokens(&self) -> u64 {
        self.tokens.iter().map(|t| t.input + t.output).sum()
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Invocation counts by tool name.
    pub fn action_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for inv in &self.invocations {
            *counts.entry(action_label(inv)).or_insert(0) += 1;
        }
        counts
    }
}

/// Tool name, refined to `family command` for planning/version-control
/// commands issued through bash.
pub fn action_label(inv: &Invocation) -> String {
    if inv.name == "bash" {
        if let Some(cmd) = inv.args.get("command").and_then(Value::as_str) {
            let mut words = cmd.split_whitespace();
            if let (Some(family @ ("hypothesis_plan" | "hypothesis_git")), Some(sub)) = (words.next(), words.next()) {
                return format!("{family} {sub}");
            }
        }
    }
    inv.name.clone()
}

/// Tracks descent depth as search results arrive. Entry-point tools give
/// depth 0; `find_child_unit` on a unit listed as a child of an earlier hit
/// at depth d gives d + 1 (the shallowest such parent); a descent to a unit
/// never listed as a child counts as depth 1.
#[derive(Debug, Default)]
pub struct DepthTracker {
    /// child id -> shallowest depth of a hit that listed it
    parents: HashMap<String, usize>,
}

impl DepthTracker {
    pub fn observe(&mut self, tool: &str, target: Option<&str>, units: &[ReturnedUnit]) -> usize {
        let depth = if tool == crate::search::tool::FIND_CHILD_UNIT {
            target.and_then(|t| self.parents.get(t)).map_or(1, |d| d + 1)
        } else {
            0
        };
        for u in units {
            for c in &u.children {
                let e = self.parents.entry(c.clone()).or_insert(depth);
                *e = (*e).min(depth);
            }
        }
        depth
    }
}
