//! Status-tagged checklists and the planning commands that keep working
//! memory in sync with them.

use std::sync::LazyLock;

use regex::Regex;

use crate::memory::{ActionKind, HypothesisRecord, Insight, Status, TodoRecord, WorkingMemoryState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChecklistItem {
    pub status: Status,
    pub text: String,
    pub confidence: Option<f64>,
    pub action: Option<ActionKind>,
}

/// A parsed checklist. Equality ignores the raw source text.
#[derive(Debug, Clone, Default)]
pub struct ChecklistDocument {
    pub items: Vec<ChecklistItem>,
    pub raw: String,
}

impl PartialEq for ChecklistDocument {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

static ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*+]\s*|\d+[.)]\s*)?(\[[^\]]{0,3}\])\s*(.*?)\s*$").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:[-*+]|\d+[.)])\s+\S").unwrap());
static CONFIDENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\s*\(\s*confidence\s*[:=]\s*([^)]*)\)\s*$").unwrap());
static ACTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\s*\(\s*(edit|test)\s*\)\s*$").unwrap());

impl ChecklistDocument {
    /// Parses one item per line. Lines that are neither bullets nor tagged
    /// (headings, prose, blank lines) are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for line in text.lines() {
            let Some(caps) = ITEM.captures(line) else {
                if BULLET.is_match(line) {
                    return Err(Error::parse(
                        "list item is missing a status tag ([ ], [-], [v] or [!])",
                        Some(line),
                    ));
                }
                continue;
            };
            let status = Status::from_tag(&caps[1]).ok_or_else(|| {
                Error::parse(
                    format!("unknown status tag `{}`; use [ ], [-], [v] or [!]", &caps[1]),
                    Some(line),
                )
            })?;
            let mut text = caps[2].to_string();
            let mut confidence = None;
            let mut action = None;
            loop {
                if let Some(c) = CONFIDENCE.captures(&text) {
                    if confidence.is_some() {
                        return Err(Error::parse("confidence given twice", Some(line)));
                    }
                    let raw = c[1].trim();
                    let value: f64 = raw
                        .parse()
                        .map_err(|_| Error::parse(format!("confidence `{raw}` is not a number"), Some(line)))?;
                    if !(0.1..=1.0).contains(&value) {
                        return Err(Error::parse(
                            format!("confidence {value} is outside 0.1-1.0"),
                            Some(line),
                        ));
                    }
                    confidence = Some(value);
                    text.truncate(c.get(0).unwrap().start());
                } else if let Some(a) = ACTION.captures(&text) {
                    if action.is_some() {
                        return Err(Error::parse("action given twice", Some(line)));
                    }
                    action = Some(if a[1].eq_ignore_ascii_case("edit") {
                        ActionKind::Edit
                    } else {
                        ActionKind::Test
                    });
                    text.truncate(a.get(0).unwrap().start());
                } else {
                    break;
                }
            }
            let text = text.trim().to_string();
            if text.is_empty() {
                return Err(Error::parse("item has no text", Some(line)));
            }
            items.push(ChecklistItem {
                status,
                text,
                confidence,
                action,
            });
        }
        if items.is_empty() {
            return Err(Error::parse(
                "no checklist items found; write lines like `- [ ] text`",
                None,
            ));
        }
        Ok(Self {
            items,
            raw: text.to_string(),
        })
    }

    pub fn render(&self) -> String {
        self.items
            .iter()
            .map(|i| {
                let mut line = format!("- {} {}", i.status.tag(), i.text);
                if let Some(a) = i.action {
                    line.push_str(&format!(" ({})", a.as_str()));
                }
                if let Some(c) = i.confidence {
                    line.push_str(&format!(" (confidence: {c})"));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Result of a planning command: the observation text plus whether the
/// command grew the to-do list of an in-progress hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanOutcome {
    pub text: String,
    pub expanded: bool,
}

/// `H1: description` -> ("H1", Some("description")); text without a short
/// label is both name and content.
fn split_name(text: &str) -> (String, Option<String>) {
    if let Some((name, rest)) = text.split_once(':') {
        let name = name.trim();
        let rest = rest.trim();
        if !name.is_empty() && name.len() <= 40 && !rest.is_empty() {
            return (name.to_string(), Some(rest.to_string()));
        }
    }
    (text.to_string(), None)
}

pub fn update_hypothesis(memory: &mut WorkingMemoryState, markdown: &str) -> Result<PlanOutcome> {
    let doc = ChecklistDocument::parse(markdown)?;
    let mut next = memory.clone();
    let mut ordered: Vec<HypothesisRecord> = Vec::new();
    for item in &doc.items {
        let (name, content) = split_name(&item.text);
        if ordered.iter().any(|h| h.name == name) {
            return Err(Error::Conflict {
                message: format!("hypothesis `{name}` is listed twice"),
                suggestion: None,
            });
        }
        let record = match next.hypotheses.iter().position(|h| h.name == name) {
            Some(i) => {
                let mut h = next.hypotheses.remove(i);
                if item.status == Status::Pending && h.branch.is_some() {
                    return Err(Error::Conflict {
                        message: format!("hypothesis `{name}` already has a branch and cannot go back to pending"),
                        suggestion: Some("mark it [!] or [v] instead".to_string()),
                    });
                }
                h.status = item.status;
                if let Some(c) = content {
                    h.content = c;
                }
                if let Some(c) = item.confidence {
                    h.confidence = c;
                }
                h
            }
            None => {
                let confidence = item.confidence.ok_or_else(|| {
                    Error::parse(
                        format!("new hypothesis `{name}` needs a confidence annotation, e.g. (confidence: 0.7)"),
                        Some(&item.text),
                    )
                })?;
                HypothesisRecord::new(name.clone(), content.unwrap_or(name), item.status, confidence)
            }
        };
        ordered.push(record);
    }
    // hypotheses missing from the document are kept, after the listed ones
    ordered.append(&mut next.hypotheses);
    next.hypotheses = ordered;
    *memory = next;
    Ok(PlanOutcome {
        text: hypothesis_overview(memory),
        expanded: false,
    })
}

pub fn update_todo(memory: &mut WorkingMemoryState, hypothesis: &str, markdown: &str) -> Result<PlanOutcome> {
    let doc = ChecklistDocument::parse(markdown)?;
    let mut next = memory.clone();
    let h = next.hypothesis_mut(hypothesis.trim())?;
    let before = h.todos.len();
    let mut ordered: Vec<TodoRecord> = Vec::new();
    for item in &doc.items {
        if ordered.iter().any(|t| t.content == item.text) {
            return Err(Error::Conflict {
                message: format!("to-do `{}` is listed twice", item.text),
                suggestion: None,
            });
        }
        let todo = match h.todos.iter().position(|t| t.content == item.text) {
            Some(i) => {
                let mut t = h.todos.remove(i);
                t.status = item.status;
                if let Some(a) = item.action {
                    t.action = a;
                }
                t
            }
            None => {
                let action = item.action.ok_or_else(|| {
                    Error::parse(
                        "each new to-do must end with (edit) or (test)",
                        Some(&format!("{} {}", item.status.tag(), item.text)),
                    )
                })?;
                TodoRecord::new(item.text.clone(), action, item.status)
            }
        };
        ordered.push(todo);
    }
    ordered.append(&mut h.todos);
    h.todos = ordered;
    let expanded = h.status == Status::InProgress && before > 0 && h.todos.len() > before;
    let text = todo_overview(h);
    *memory = next;
    Ok(PlanOutcome { text, expanded })
}

pub fn log_insight(memory: &mut WorkingMemoryState, insight: &str) -> Result<PlanOutcome> {
    let text = insight.trim();
    if text.is_empty() {
        return Err(Error::InvalidArgument("insight must not be empty".into()));
    }
    let hypothesis = memory.current_hypothesis().map(|h| h.name.clone());
    let timestamp = memory.tick();
    memory.insights.push(Insight {
        hypothesis: hypothesis.clone(),
        text: text.to_string(),
        timestamp,
    });
    let scope = match &hypothesis {
        Some(h) => format!("hypothesis `{h}`"),
        None => "the task (no hypothesis in progress)".to_string(),
    };
    Ok(PlanOutcome {
        text: format!("Insight #{timestamp} logged for {scope}: {text}"),
        expanded: false,
    })
}

pub fn hypothesis_overview(memory: &WorkingMemoryState) -> String {
    let mut out = format!("Hypotheses ({}):\n", memory.hypotheses.len());
    for (i, h) in memory.hypotheses.iter().enumerate() {
        out.push_str(&format!(
            "{}. {} {}: {} (confidence: {})",
            i + 1,
            h.status.tag(),
            h.name,
            h.content,
            h.confidence
        ));
        if let Some(b) = &h.branch {
            out.push_str(&format!(" [branch: {b}]"));
        }
        out.push('\n');
    }
    out
}

pub fn todo_overview(h: &HypothesisRecord) -> String {
    let mut out = format!("To-dos for {} ({}):\n", h.name, h.todos.len());
    for (i, t) in h.todos.iter().enumerate() {
        out.push_str(&format!(
            "{}. {} {} ({})",
            i + 1,
            t.status.tag(),
            t.content,
            t.action.as_str()
        ));
        if let Some(cp) = &t.checkpoint {
            out.push_str(&format!(" [checkpoint {}]", &cp.hash[..12]));
        }
        out.push('\n');
    }
    out
}
