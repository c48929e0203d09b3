//! The localization agent: a tool-calling search loop over the code index
//! followed by preview-based shortlisting and full-source re-ranking.

use std::collections::HashSet;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{LocalizationConfig, SearchConfig};
use crate::index::{normalize_rel, CodeIndex};
use crate::llm::{ChatRequest, ChatResponse, LlmClient, Message, Phase};
use crate::prompts::{render, LocalizationPrompts};
use crate::search::tool::{self, ReturnedUnit};
use crate::search::SearchTools;
use crate::trajectory::{DepthTracker, Invocation, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTask {
    pub instance_id: String,
    pub repo_name: String,
    pub issue: String,
    pub iteration_limit: usize,
}

impl LocalizationTask {
    pub fn validate(&self) -> Result<()> {
        if self.issue.trim().is_empty() {
            return Err(Error::InvalidTask("issue description is empty".into()));
        }
        if self.iteration_limit == 0 {
            return Err(Error::InvalidTask("iteration limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEntry {
    pub path: String,
    /// Dotted definition name; `None` for a file-level location.
    pub name: Option<String>,
    pub start_line: usize,
    pub end_line: usize,
    pub rationale: String,
    pub stage: Stage,
}

impl LocationEntry {
    pub fn key(&self) -> (String, Option<String>) {
        (self.path.clone(), self.name.clone())
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => format!("{}::{n}", self.path),
            None => self.path.clone(),
        }
    }
}

/// An ordered, duplicate-free list of locations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankedLocations(pub Vec<LocationEntry>);

impl RankedLocations {
    pub fn entries(&self) -> &[LocationEntry] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Files in order of first occurrence.
    pub fn files(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.0
            .iter()
            .filter(|e| seen.insert(e.path.clone()))
            .map(|e| e.path.clone())
            .collect()
    }

    /// Function-level `(path, name)` pairs in ranking order.
    pub fn functions(&self) -> Vec<(String, String)> {
        self.0
            .iter()
            .filter_map(|e| e.name.clone().map(|n| (e.path.clone(), n)))
            .collect()
    }

    /// Numbered `path::name (lines a-b)` list for prompts.
    pub fn render_hints(&self) -> String {
        if self.0.is_empty() {
            return "(none)".into();
        }
        self.0
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut line = format!("{}. {} (lines {}-{})", i + 1, e.label(), e.start_line, e.end_line);
                if !e.rationale.is_empty() {
                    line.push_str(&format!(" - {}", e.rationale));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// The handoff artifact written by `locate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationOutput {
    pub instance_id: String,
    /// Final (second-stage) ranking.
    pub locations: RankedLocations,
    /// First-stage shortlist the final ranking was drawn from.
    pub shortlist: RankedLocations,
    pub trajectory: Trajectory,
}

impl LocalizationOutput {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("output serializes");
        crate::fsutil::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// A run that stopped early, with whatever trajectory was collected.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    pub trajectory: Box<Trajectory>,
}

/// One parsed line of a ranking reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedItem {
    pub path: String,
    pub name: Option<String>,
    pub rationale: String,
}

/// Parses numbered `path::name` lines (or `path:name`, or a bare path),
/// ignoring surrounding prose. The first occurrence of a duplicate wins.
pub fn parse_ranking(reply: &str) -> Result<Vec<RankedItem>> {
    let item = Regex::new(r"^\s*(?:[-*]\s*)?\d+[.)]\s+(.+)$").expect("static regex");
    let mut out: Vec<RankedItem> = Vec::new();
    for line in reply.lines() {
        let Some(caps) = item.captures(line) else { continue };
        let body = caps[1].trim();
        let (loc, rest) = match body.find(char::is_whitespace) {
            Some(i) => (&body[..i], body[i..].trim()),
            None => (body, ""),
        };
        let loc = loc.trim_matches(|c: char| matches!(c, '`' | '*' | '"' | '\'' | ',' | ';'));
        let loc = loc.trim_end_matches([':', '.']);
        let (path, name) = if let Some((p, n)) = loc.split_once("::") {
            (p, Some(n))
        } else if let Some((p, n)) = loc.split_once(':') {
            (p, Some(n))
        } else {
            (loc, None)
        };
        let path = normalize_rel(path);
        let looks_like_path = path.contains('.') || path.contains('/');
        if path.is_empty() || !looks_like_path || name.is_some_and(str::is_empty) {
            continue;
        }
        let rationale = rest
            .trim_start_matches(|c: char| matches!(c, '-' | ':' | '(' | ')') || c.is_whitespace() || c == '\u{2014}')
            .trim()
            .to_string();
        let entry = RankedItem {
            path,
            name: name.map(str::to_string),
            rationale,
        };
        if !out.iter().any(|e| e.path == entry.path && e.name == entry.name) {
            out.push(entry);
        }
    }
    if out.is_empty() {
        return Err(Error::parse(
            "no ranked locations found; reply with numbered lines like `1. path/to/file.py::function_name`",
            None,
        ));
    }
    Ok(out)
}

pub struct Localizer<'a> {
    index: &'a CodeIndex,
    tools: SearchTools<'a>,
    config: LocalizationConfig,
    prompts: LocalizationPrompts,
    result_cap: usize,
}

struct Conversation {
    messages: Vec<Message>,
    trajectory: Trajectory,
}

impl Conversation {
    fn ask(&mut self, client: &mut dyn LlmClient, phase: Phase, tools: &[Value]) -> Result<ChatResponse> {
        let reply = client.complete(&ChatRequest {
            phase,
            messages: &self.messages,
            tools,
        })?;
        self.trajectory.record_turn(phase, reply.usage);
        self.messages.push(Message::assistant(&reply));
        Ok(reply)
    }
}

impl<'a> Localizer<'a> {
    pub fn new(
        index: &'a CodeIndex,
        search: &SearchConfig,
        config: &LocalizationConfig,
        prompts: LocalizationPrompts,
    ) -> Result<Self> {
        Ok(Self {
            index,
            tools: SearchTools::new(index, search)?,
            config: config.clone(),
            prompts,
            result_cap: search.result_cap,
        })
    }

    pub fn run(&self, task: &LocalizationTask, client: &mut dyn LlmClient) -> Result<LocalizationOutput, RunFailure> {
        task.validate().map_err(|error| RunFailure {
            error,
            trajectory: Box::default(),
        })?;
        let mut conv = self.open(task);
        match self.drive(task, client, &mut conv) {
            Ok((shortlist, locations)) => Ok(LocalizationOutput {
                instance_id: task.instance_id.clone(),
                locations,
                shortlist,
                trajectory: conv.trajectory,
            }),
            Err(error) => Err(RunFailure {
                error,
                trajectory: Box::new(conv.trajectory),
            }),
        }
    }

    fn drive(
        &self,
        task: &LocalizationTask,
        client: &mut dyn LlmClient,
        conv: &mut Conversation,
    ) -> Result<(RankedLocations, RankedLocations)> {
        let explored = self.search_phase(task, client, conv)?;
        let shortlist = self.stage_one(client, conv, &explored)?;
        let final_list = self.rerank(client, conv, &shortlist)?;
        Ok((shortlist, final_list))
    }

    /// The tool loop. Every executed tool call and every turn without a
    /// call uses one iteration; a malformed call gets one free retry per
    /// turn. Returns the units seen, in first-seen order.
    fn search_phase(
        &self,
        task: &LocalizationTask,
        client: &mut dyn LlmClient,
        conv: &mut Conversation,
    ) -> Result<Vec<String>> {
        let schemas = tool::tool_schemas();
        let mut depth = DepthTracker::default();
        let mut seen: Vec<String> = Vec::new();
        let mut retry_used = false;

        'turns: while conv.trajectory.search_iterations < task.iteration_limit {
            let reply = conv.ask(client, Phase::Search, &schemas)?;
            let turn = conv.trajectory.turns;
            if reply.tool_calls.is_empty() {
                conv.trajectory.search_iterations += 1;
                conv.messages.push(Message::user(render(
                    &self.prompts.next_action,
                    &[(
                        "observation",
                        "No tool was called. Use a search tool, or call finish_search when done.",
                    )],
                )));
                continue;
            }
            let mut malformed_this_turn = false;
            for call in &reply.tool_calls {
                if conv.trajectory.search_iterations >= task.iteration_limit {
                    conv.messages
                        .push(Message::tool(&call.id, "Not executed: iteration limit reached."));
                    continue;
                }
                match self.tools.invoke(&call.name, &call.arguments) {
                    Err(bad) => {
                        let free = !retry_used;
                        if !free {
                            conv.trajectory.search_iterations += 1;
                        }
                        malformed_this_turn = true;
                        conv.trajectory.invocations.push(Invocation {
                            turn,
                            phase: Phase::Search,
                            name: call.name.clone(),
                            args: call.arguments.clone(),
                            ok: false,
                            malformed: true,
                            response_chars: bad.to_string().len(),
                            units: Vec::new(),
                            depth: None,
                            effect: None,
                        });
                        conv.messages.push(Message::tool(
                            &call.id,
                            render(&self.prompts.next_action, &[("observation", &format!("Error: {bad}"))]),
                        ));
                    }
                    Ok(out) => {
                        conv.trajectory.search_iterations += 1;
                        let target = (call.name == tool::FIND_CHILD_UNIT).then(|| child_target(&call.arguments));
                        let d =
                            (!out.finished && out.ok).then(|| depth.observe(&call.name, target.as_deref(), &out.units));
                        if let Some(d) = d {
                            conv.trajectory.max_depth = conv.trajectory.max_depth.max(d);
                            for u in &out.units {
                                let e = conv.trajectory.path_depths.entry(u.id.clone()).or_insert(d);
                                *e = (*e).max(d);
                            }
                        }
                        for u in &out.units {
                            if !seen.contains(&u.id) {
                                seen.push(u.id.clone());
                            }
                        }
                        conv.trajectory.invocations.push(Invocation {
                            turn,
                            phase: Phase::Search,
                            name: call.name.clone(),
                            args: call.arguments.clone(),
                            ok: out.ok,
                            malformed: false,
                            response_chars: out.text.len(),
                            units: out.units.clone(),
                            depth: d,
                            effect: None,
                        });
                        conv.messages.push(Message::tool(
                            &call.id,
                            render(&self.prompts.next_action, &[("observation", out.text.trim_end())]),
                        ));
                        if out.finished {
                            break 'turns;
                        }
                    }
                }
            }
            if malformed_this_turn {
                retry_used = !retry_used;
            } else {
                retry_used = false;
            }
        }
        Ok(seen)
    }

    /// First-stage shortlist from the agent's preview-based ranking. An
    /// unparseable reply gets one retry; after that the explored units are
    /// used in the order they were first returned.
    fn stage_one(
        &self,
        client: &mut dyn LlmClient,
        conv: &mut Conversation,
        explored: &[String],
    ) -> Result<RankedLocations> {
        conv.messages.push(Message::user(self.prompts.first_stage.trim()));
        let items = match self.ask_ranking(client, conv, Phase::Filter1)? {
            Some(items) => items,
            None => {
                conv.trajectory
                    .warn("first-stage reply unparseable after retry; using explored units in discovery order");
                explored
                    .iter()
                    .filter_map(|id| self.index.get_unit(id).ok())
                    .filter(|u| u.is_definition())
                    .take(self.result_cap)
                    .map(|u| RankedItem {
                        path: u.location.path.clone(),
                        name: u.name.clone(),
                        rationale: String::new(),
                    })
                    .collect()
            }
        };
        let mut out = Vec::new();
        for item in items {
            match self.resolve_item(&item, Stage::Stage1) {
                Some(e) => out.push(e),
                None => conv
                    .trajectory
                    .warn(format!("stage 1: dropped unknown location `{}`", item_label(&item))),
            }
        }
        Ok(RankedLocations(out))
    }

    /// Runs only the second stage on a given shortlist, in a fresh
    /// conversation seeded with the task.
    pub fn stage_two_rerank(
        &self,
        task: &LocalizationTask,
        client: &mut dyn LlmClient,
        shortlist: &RankedLocations,
    ) -> Result<(RankedLocations, Trajectory)> {
        let mut conv = self.open(task);
        let ranked = self.rerank(client, &mut conv, shortlist)?;
        Ok((ranked, conv.trajectory))
    }

    fn open(&self, task: &LocalizationTask) -> Conversation {
        Conversation {
            messages: vec![
                Message::system(self.prompts.system.trim()),
                Message::user(render(
                    &self.prompts.instance,
                    &[("repo_name", &task.repo_name), ("issue_description", task.issue.trim())],
                )),
            ],
            trajectory: Trajectory::default(),
        }
    }

    /// Sends the full source of each shortlisted location and keeps the
    /// agent's re-ranking, restricted to the shortlist.
    fn rerank(
        &self,
        client: &mut dyn LlmClient,
        conv: &mut Conversation,
        shortlist: &RankedLocations,
    ) -> Result<RankedLocations> {
        let content = self.source_payload(shortlist);
        conv.messages.push(Message::user(render(
            &self.prompts.second_stage,
            &[("source_code_content", &content)],
        )));
        let Some(items) = self.ask_ranking(client, conv, Phase::Filter2)? else {
            conv.trajectory
                .warn("second-stage reply unparseable after retry; keeping the first-stage ranking");
            return Ok(restage(
                shortlist,
                shortlist.0.iter().map(|e| e.rationale.clone()).collect(),
            ));
        };
        let mut kept = Vec::new();
        for item in items {
            let found = shortlist
                .0
                .iter()
                .find(|e| e.path == item.path && e.name == item.name)
                .or_else(|| {
                    // tolerate short names for nested definitions
                    let matches: Vec<_> = shortlist
                        .0
                        .iter()
                        .filter(|e| {
                            e.path == item.path
                                && item.name.as_deref().is_some_and(|n| {
                                    e.name.as_deref().is_some_and(|en| en.rsplit('.').next() == Some(n))
                                })
                        })
                        .collect();
                    (matches.len() == 1).then(|| matches[0])
                });
            match found {
                Some(e) if !kept.iter().any(|k: &LocationEntry| k.key() == e.key()) => {
                    let mut e = e.clone();
                    e.stage = Stage::Stage2;
                    if !item.rationale.is_empty() {
                        e.rationale = item.rationale;
                    }
                    kept.push(e);
                }
                Some(_) => {}
                None => conv.trajectory.warn(format!(
                    "stage 2: dropped `{}` (not in the first-stage shortlist)",
                    item_label(&item)
                )),
            }
        }
        if kept.is_empty() && !shortlist.is_empty() {
            conv.trajectory
                .warn("second-stage ranking kept nothing from the shortlist; keeping the first-stage ranking");
            return Ok(restage(
                shortlist,
                shortlist.0.iter().map(|e| e.rationale.clone()).collect(),
            ));
        }
        Ok(RankedLocations(kept))
    }

    fn ask_ranking(
        &self,
        client: &mut dyn LlmClient,
        conv: &mut Conversation,
        phase: Phase,
    ) -> Result<Option<Vec<RankedItem>>> {
        for attempt in 0..2 {
            let reply = conv.ask(client, phase, &[])?;
            match parse_ranking(&reply.content) {
                Ok(items) => return Ok(Some(items)),
                Err(e) if attempt == 0 => {
                    conv.trajectory.warn(format!("{phase:?} reply: {e}"));
                    conv.messages.push(Message::user(format!("Error: {e}")));
                }
                Err(e) => conv.trajectory.warn(format!("{phase:?} reply: {e}")),
            }
        }
        Ok(None)
    }

    fn resolve_item(&self, item: &RankedItem, stage: Stage) -> Option<LocationEntry> {
        let file = self.index.file(&item.path)?;
        let (name, start, end) = match &item.name {
            None => (None, 1, file.line_count.max(1)),
            Some(n) => {
                let unit = self
                    .index
                    .get_unit(&format!("{}:{n}", item.path))
                    .ok()
                    .filter(|u| u.is_definition())
                    .or_else(|| {
                        let hits: Vec<_> = self
                            .index
                            .file_units(&item.path)
                            .filter(|u| u.is_definition() && u.short_name() == Some(n.as_str()))
                            .collect();
                        (hits.len() == 1).then(|| hits[0])
                    })?;
                (unit.name.clone(), unit.location.start_line, unit.location.end_line)
            }
        };
        Some(LocationEntry {
            path: item.path.clone(),
            name,
            start_line: start,
            end_line: end,
            rationale: item.rationale.clone(),
            stage,
        })
    }

    /// Full source for each entry, capped at the stage-2 byte budget. A unit
    /// that overflows keeps its head and loses its tail.
    pub fn source_payload(&self, shortlist: &RankedLocations) -> String {
        let mut remaining = self.config.stage2_byte_budget;
        let mut out = String::new();
        for e in &shortlist.0 {
            let text = match &e.name {
                Some(n) => self
                    .index
                    .get_unit(&format!("{}:{n}", e.path))
                    .map(|u| u.text.clone())
                    .unwrap_or_default(),
                None => self.index.file_text(&e.path).unwrap_or_default(),
            };
            out.push_str(&format!(
                "### {} (lines {}-{})\n```\n",
                e.label(),
                e.start_line,
                e.end_line
            ));
            if text.len() <= remaining {
                remaining -= text.len();
                out.push_str(&text);
                out.push('\n');
            } else {
                let mut kept = 0;
                let mut shown = Vec::new();
                for line in text.split('\n') {
                    if kept + line.len() + 1 > remaining {
                        break;
                    }
                    kept += line.len() + 1;
                    shown.push(line);
                }
                remaining -= kept;
                let total = text.split('\n').count();
                for l in &shown {
                    out.push_str(l);
                    out.push('\n');
                }
                out.push_str(&format!(
                    "... ({} more lines elided: byte budget reached)\n",
                    total - shown.len()
                ));
            }
            out.push_str("```\n\n");
        }
        out
    }
}

fn restage(list: &RankedLocations, rationales: Vec<String>) -> RankedLocations {
    RankedLocations(
        list.0
            .iter()
            .zip(rationales)
            .map(|(e, r)| LocationEntry {
                stage: Stage::Stage2,
                rationale: r,
                ..e.clone()
            })
            .collect(),
    )
}

fn item_label(item: &RankedItem) -> String {
    match &item.name {
        Some(n) => format!("{}::{n}", item.path),
        None => item.path.clone(),
    }
}

/// The unit id a `find_child_unit` call asks for.
fn child_target(args: &Value) -> String {
    let name = args
        .get("definition_name")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .trim();
    let path = args.get("file_path").and_then(Value::as_str).unwrap_or_default().trim();
    format!("{}:{name}", normalize_rel(path))
}

/// Recomputes the maximum descent depth from a raw invocation log.
pub fn depth_from_log(invocations: &[Invocation]) -> usize {
    let mut tracker = DepthTracker::default();
    let mut max = 0;
    for inv in invocations
        .iter()
        .filter(|i| i.phase == Phase::Search && i.ok && !i.malformed)
    {
        if inv.name == tool::FINISH_SEARCH {
            continue;
        }
        let target = (inv.name == tool::FIND_CHILD_UNIT).then(|| child_target(&inv.args));
        let units: &[ReturnedUnit] = &inv.units;
        max = max.max(tracker.observe(&inv.name, target.as_deref(), units));
    }
    max
}
