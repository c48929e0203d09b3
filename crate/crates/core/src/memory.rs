//! Working memory: the persistent record of hypotheses, to-dos, insights
//! and Git checkpoints for one task instance.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fsutil::write_atomic;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    InProgress,
    Successful,
    Failed,
}

impl Status {
    pub fn tag(self) -> &'static str {
        match self {
            Status::Pending => "[ ]",
            Status::InProgress => "[-]",
            Status::Successful => "[v]",
            Status::Failed => "[!]",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "[ ]" => Status::Pending,
            "[-]" => Status::InProgress,
            "[v]" => Status::Successful,
            "[!]" => Status::Failed,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::InProgress => "in progress",
            Status::Successful => "successful",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Edit,
    Test,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Edit => "edit",
            ActionKind::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hash: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TodoRecord {
    pub content: String,
    pub action: ActionKind,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<Checkpoint>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl TodoRecord {
    pub fn new(content: impl Into<String>, action: ActionKind, status: Status) -> Self {
        Self {
            content: content.into(),
            action,
            status,
            checkpoint: None,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub name: String,
    pub content: String,
    pub status: Status,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
    /// Commit the branch was created from: the base or a checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_hash: Option<String>,
    #[serde(default)]
    pub todos: Vec<TodoRecord>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl HypothesisRecord {
    pub fn new(name: impl Into<String>, content: impl Into<String>, status: Status, confidence: f64) -> Self {
        Self {
            name: name.into(),
            content: content.into(),
            status,
            confidence,
            branch: None,
            origin_hash: None,
            todos: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Exact content match first, then a unique prefix.
    pub fn find_todo(&self, content: &str) -> Result<usize> {
        if let Some(i) = self.todos.iter().position(|t| t.content == content) {
            return Ok(i);
        }
        let prefixed: Vec<usize> = self
            .todos
            .iter()
            .enumerate()
            .filter(|(_, t)| !content.is_empty() && t.content.starts_with(content))
            .map(|(i, _)| i)
            .collect();
        match prefixed.as_slice() {
            [one] => Ok(*one),
            [] => Err(Error::NotFound {
                what: format!("to-do `{content}` in hypothesis `{}`", self.name),
                suggestions: self.todos.iter().map(|t| t.content.clone()).collect(),
            }),
            many => Err(Error::Ambiguous {
                what: format!("to-do prefix `{content}`"),
                candidates: many.iter().map(|&i| self.todos[i].content.clone()).collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insight {
    /// Hypothesis the insight belongs to; `None` for a global insight.
    pub hypothesis: Option<String>,
    pub text: String,
    /// Logical timestamp.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemoryState {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_state_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_hash: Option<String>,
    #[serde(default)]
    pub hypotheses: Vec<HypothesisRecord>,
    #[serde(default)]
    pub insights: Vec<Insight>,
    /// Hypothesis whose branch was most recently created.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_branch: Option<String>,
    /// Logical clock for insight timestamps and pinned commit times.
    #[serde(default)]
    pub clock: u64,
    #[serde(default)]
    pub stash_counter: u64,
    /// Set by a comparison report, cleared when another branch is created.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub compared: bool,
    /// Fields written by newer versions, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Default for WorkingMemoryState {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            original_state_hash: None,
            base_hash: None,
            hypotheses: Vec::new(),
            insights: Vec::new(),
            active: None,
            merged_branch: None,
            clock: 0,
            stash_counter: 0,
            compared: false,
            extra: BTreeMap::new(),
        }
    }
}

pub fn is_hash(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl WorkingMemoryState {
    pub fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn hypothesis(&self, name: &str) -> Result<&HypothesisRecord> {
        self.hypotheses
            .iter()
            .find(|h| h.name == name)
            .ok_or_else(|| self.unknown_hypothesis(name))
    }

    pub fn hypothesis_mut(&mut self, name: &str) -> Result<&mut HypothesisRecord> {
        let err = self.unknown_hypothesis(name);
        self.hypotheses.iter_mut().find(|h| h.name == name).ok_or(err)
    }

    fn unknown_hypothesis(&self, name: &str) -> Error {
        Error::NotFound {
            what: format!("hypothesis `{name}`"),
            suggestions: self.hypotheses.iter().map(|h| h.name.clone()).collect(),
        }
    }

    pub fn hypothesis_for_branch(&self, branch: &str) -> Option<&HypothesisRecord> {
        self.hypotheses.iter().find(|h| h.branch.as_deref() == Some(branch))
    }

    /// Hypothesis insights and status updates apply to: the active one when
    /// it is in progress, else the only in-progress one.
    pub fn current_hypothesis(&self) -> Option<&HypothesisRecord> {
        if let Some(h) = self.active.as_deref().and_then(|a| self.hypothesis(a).ok()) {
            if h.status == Status::InProgress {
                return Some(h);
            }
        }
        let mut live = self.hypotheses.iter().filter(|h| h.status == Status::InProgress);
        match (live.next(), live.next()) {
            (Some(h), None) => Some(h),
            _ => None,
        }
    }

    pub fn record_checkpoint(&mut self, hypothesis: &str, todo: &str, hash: &str, message: &str) -> Result<()> {
        if !is_hash(hash) {
            return Err(Error::InvalidQuery(format!(
                "`{hash}` is not a 40-character commit hash"
            )));
        }
        let h = self.hypothesis_mut(hypothesis)?;
        if h.status != Status::InProgress {
            return Err(Error::Precondition(format!(
                "hypothesis `{}` is {}, not in progress",
                h.name,
                h.status.label()
            )));
        }
        let i = h.find_todo(todo)?;
        let t = &mut h.todos[i];
        if let Some(cp) = &t.checkpoint {
            return Err(Error::Conflict {
                message: format!("to-do `{}` already has checkpoint {}", t.content, &cp.hash[..12]),
                suggestion: None,
            });
        }
        t.checkpoint = Some(Checkpoint {
            hash: hash.to_string(),
            message: message.to_string(),
        });
        Ok(())
    }

    pub fn lookup_checkpoint(&self, hypothesis: &str, todo: &str) -> Result<&Checkpoint> {
        let h = self.hypothesis(hypothesis)?;
        let i = h.find_todo(todo)?;
        h.todos[i].checkpoint.as_ref().ok_or_else(|| Error::NotFound {
            what: format!(
                "checkpoint for to-do `{}` (it has not been committed)",
                h.todos[i].content
            ),
            suggestions: h
                .todos
                .iter()
                .filter(|t| t.checkpoint.is_some())
                .map(|t| t.content.clone())
                .collect(),
        })
    }

    /// Referential checks that hold for every reachable state.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Consistency(m);
        for hash in [&self.original_state_hash, &self.base_hash].into_iter().flatten() {
            if !is_hash(hash) {
                return Err(bad(format!("malformed hash `{hash}`")));
            }
        }
        if self.base_hash.is_some() != self.original_state_hash.is_some() {
            return Err(bad("base and original hashes must be set together".into()));
        }
        let mut names = std::collections::HashSet::new();
        for h in &self.hypotheses {
            if !names.insert(&h.name) {
                return Err(bad(format!("duplicate hypothesis `{}`", h.name)));
            }
            if h.branch.is_some() && h.status == Status::Pending {
                return Err(bad(format!("hypothesis `{}` has a branch but is pending", h.name)));
            }
            for t in &h.todos {
                if let Some(cp) = &t.checkpoint {
                    if !is_hash(&cp.hash) {
                        return Err(bad(format!("malformed checkpoint hash `{}`", cp.hash)));
                    }
                }
            }
        }
        for i in &self.insights {
            if let Some(h) = &i.hypothesis {
                if !names.contains(h) {
                    return Err(bad(format!("insight refers to unknown hypothesis `{h}`")));
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON: sorted keys, two-space indentation, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("memory serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            path: origin.to_path_buf(),
            message,
        };
        let value: Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        match value.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(schema(format!(
                    "schema version {v} is not supported (this build reads version {SCHEMA_VERSION})"
                )))
            }
            None => return Err(schema("missing `schema_version`".into())),
        }
        serde_json::from_value(value).map_err(|e| schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_atomic(path, self.to_canonical_json().as_bytes())
    }

    /// Loads `path`, or starts fresh when it does not exist yet.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }
}

/// One memory file per instance in a shared directory.
#[derive(Debug, Clone)]
pub struct MemoryRegistry {
    dir: PathBuf,
}

impl MemoryRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, instance_id: &str) -> PathBuf {
        let safe: String = instance_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.dir.join(format!("{safe}.json"))
    }

    /// Exclusive per-instance lock, held until the guard drops.
    pub fn lock(&self, instance_id: &str) -> Result<ActionLock> {
        ActionLock::acquire(&self.path_for(instance_id).with_extension("lock"))
    }
}

/// Serializes actions on one instance (advisory file lock).
#[derive(Debug)]
pub struct ActionLock {
    _file: File,
}

impl ActionLock {
    pub fn acquire(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.lock().map_err(|e| Error::io(path, e))?;
        Ok(Self { _file: file })
    }
}
