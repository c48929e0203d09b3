//! Branch-per-hypothesis version control over the agent's workspace.
//!
//! Every action runs against a clone of the working memory and only writes
//! it back when all Git commands succeeded, so a failed action leaves the
//! memory untouched. Commands are logged for the observation text.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;

use crate::config::GitConfig;
use crate::memory::{Status, WorkingMemoryState};
use crate::{Error, Result};

pub const BASE_MESSAGE: &str = "sleuth: common working base";
const EXCLUDES: [&str; 3] = ["__pycache__/", "*.pyc", ".pytest_cache/"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GitEvent {
    Initialized,
    BranchStarted,
    Committed,
    Reverted,
    Compared,
    Merged,
}

#[derive(Debug, Clone, Serialize)]
pub struct GitActionResult {
    pub event: GitEvent,
    pub hash: Option<String>,
    pub branch: Option<String>,
    pub message: String,
    pub log: Vec<String>,
}

impl GitActionResult {
    pub fn render(&self) -> String {
        let mut out = self.message.trim_end().to_string();
        if !self.log.is_empty() {
            out.push_str("\n\ncommands:\n");
            out.push_str(&self.log.join("\n"));
        }
        out
    }
}

/// Runs git in one working tree with a fixed identity and environment.
#[derive(Debug)]
pub struct GitWorkspace {
    root: PathBuf,
    cfg: GitConfig,
    log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GitOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl GitWorkspace {
    pub fn new(root: impl Into<PathBuf>, cfg: &GitConfig) -> Self {
        Self {
            root: root.into(),
            cfg: cfg.clone(),
            log: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn take_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.log)
    }

    /// Runs `git args`, returning the output whatever the exit code.
    pub fn raw(&mut self, args: &[&str], clock: Option<u64>) -> Result<GitOutput> {
        let mut cmd = Command::new("git");
        cmd.args([
            "-c",
            "core.autocrlf=false",
            "-c",
            "commit.gpgsign=false",
            "-c",
            "core.quotepath=false",
        ])
        .args(args)
        .current_dir(&self.root)
        .env("GIT_AUTHOR_NAME", &self.cfg.user_name)
        .env("GIT_AUTHOR_EMAIL", &self.cfg.user_email)
        .env("GIT_COMMITTER_NAME", &self.cfg.user_name)
        .env("GIT_COMMITTER_EMAIL", &self.cfg.user_email)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_TERMINAL_PROMPT", "0")
        .env("LC_ALL", "C")
        .env("PYTHONDONTWRITEBYTECODE", "1");
        if let (Some(epoch), Some(tick)) = (self.cfg.pinned_epoch, clock) {
            let date = format!("@{} +0000", epoch + tick as i64);
            cmd.env("GIT_AUTHOR_DATE", &date).env("GIT_COMMITTER_DATE", &date);
        }
        let out = cmd.output().map_err(|e| Error::Git {
            message: format!("cannot run git: {e}"),
            log: self.log.clone(),
        })?;
        let result = GitOutput {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        };
        self.log
            .push(format!("$ git {} (exit {})", args.join(" "), result.code));
        Ok(result)
    }

    /// Runs `git args` and fails on a non-zero exit.
    pub fn run(&mut self, args: &[&str]) -> Result<String> {
        self.run_at(args, None)
    }

    fn run_at(&mut self, args: &[&str], clock: Option<u64>) -> Result<String> {
        let out = self.raw(args, clock)?;
        if out.code != 0 {
            return Err(Error::Git {
                message: format!("git {} failed: {}", args.join(" "), out.stderr.trim()),
                log: self.log.clone(),
            });
        }
        Ok(out.stdout)
    }

    pub fn head(&mut self) -> Result<String> {
        Ok(self.run(&["rev-parse", "HEAD"])?.trim().to_string())
    }

    pub fn current_branch(&mut self) -> Result<Option<String>> {
        let out = self.raw(&["symbolic-ref", "--short", "-q", "HEAD"], None)?;
        Ok((out.code == 0).then(|| out.stdout.trim().to_string()))
    }

    pub fn branch_exists(&mut self, branch: &str) -> Result<bool> {
        let r = format!("refs/heads/{branch}");
        Ok(self.raw(&["rev-parse", "--verify", "-q", &r], None)?.code == 0)
    }

    pub fn is_dirty(&mut self) -> Result<bool> {
        Ok(!self
            .run(&["status", "--porcelain", "--untracked-files=all"])?
            .trim()
            .is_empty())
    }

    /// Keeps interpreter caches out of every commit and patch.
    pub fn ensure_excludes(&self) -> Result<()> {
        let info = self.root.join(".git").join("info");
        std::fs::create_dir_all(&info).map_err(|e| Error::io(&info, e))?;
        let path = info.join("exclude");
        let mut text = std::fs::read_to_string(&path).unwrap_or_default();
        for pat in EXCLUDES {
            if !text.lines().any(|l| l.trim() == pat) {
                if !text.is_empty() && !text.ends_with('\n') {
                    text.push('\n');
                }
                text.push_str(pat);
                text.push('\n');
            }
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Stashes uncommitted work (including untracked files) before a branch
    /// switch; a clean tree creates no stash.
    fn stash_if_dirty(&mut self, memory: &mut WorkingMemoryState, label: &str) -> Result<Option<String>> {
        if !self.is_dirty()? {
            return Ok(None);
        }
        memory.stash_counter += 1;
        let name = format!("adept:{label}:{}", memory.stash_counter);
        let tick = memory.tick();
        self.run_at(&["stash", "push", "--include-untracked", "-m", &name], Some(tick))?;
        Ok(Some(name))
    }
}

/// Lowercase `[a-z0-9._/-]`, other characters folded to `-`, at most 80
/// characters, no leading/trailing separators.
pub fn sanitize_branch(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars().flat_map(char::to_lowercase) {
        let c = if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '/' | '-') {
            c
        } else {
            '-'
        };
        if c == '-' && out.ends_with('-') {
            continue;
        }
        out.push(c);
    }
    while out.contains("..") {
        out = out.replace("..", ".");
    }
    while out.contains("//") {
        out = out.replace("//", "/");
    }
    out.truncate(80);
    let out = out.trim_matches(|c| matches!(c, '-' | '.' | '/'));
    let out = out.strip_suffix(".lock").unwrap_or(out);
    out.to_string()
}

fn check_branch(ws: &mut GitWorkspace, memory: &WorkingMemoryState, branch: &str) -> Result<()> {
    let clean = sanitize_branch(branch);
    if clean.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "`{branch}` is not a usable branch name"
        )));
    }
    if clean != branch {
        return Err(Error::Conflict {
            message: format!("branch name `{branch}` contains unsupported characters"),
            suggestion: Some(clean),
        });
    }
    let taken = |b: &str| memory.hypotheses.iter().any(|h| h.branch.as_deref() == Some(b));
    if taken(branch) || ws.branch_exists(branch)? {
        let mut n = 2;
        let mut alt = format!("{branch}-{n}");
        while taken(&alt) || ws.branch_exists(&alt)? {
            n += 1;
            alt = format!("{branch}-{n}");
        }
        return Err(Error::Conflict {
            message: format!("branch `{branch}` already exists"),
            suggestion: Some(alt),
        });
    }
    Ok(())
}

/// The hypothesis a new branch is for: the only in-progress one that has no
/// branch yet.
fn unbound_in_progress(memory: &WorkingMemoryState) -> Result<String> {
    let free: Vec<&str> = memory
        .hypotheses
        .iter()
        .filter(|h| h.status == Status::InProgress && h.branch.is_none())
        .map(|h| h.name.as_str())
        .collect();
    match free.as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(Error::Precondition(
            "no in-progress hypothesis without a branch; mark one [-] with `hypothesis_plan update_hypothesis` first"
                .into(),
        )),
        many => Err(Error::Precondition(format!(
            "several in-progress hypotheses have no branch ({}); mark only one [-]",
            many.join(", ")
        ))),
    }
}

fn require_base(memory: &WorkingMemoryState) -> Result<(String, String)> {
    match (&memory.original_state_hash, &memory.base_hash) {
        (Some(o), Some(b)) => Ok((o.clone(), b.clone())),
        _ => Err(Error::Precondition(
            "the working base is not initialized; run `hypothesis_git init_base` first".into(),
        )),
    }
}

pub fn init_base(ws: &mut GitWorkspace, memory: &mut WorkingMemoryState) -> Result<GitActionResult> {
    if memory.base_hash.is_some() {
        return Err(Error::conflict("the working base is already initialized"));
    }
    let mut m = memory.clone();
    let original = ws.head()?;
    let (name, email) = (ws.cfg.user_name.clone(), ws.cfg.user_email.clone());
    ws.run(&["config", "user.name", &name])?;
    ws.run(&["config", "user.email", &email])?;
    ws.ensure_excludes()?;
    ws.run(&["add", "-A"])?;
    let tick = m.tick();
    ws.run_at(
        &["commit", "-q", "--allow-empty", "--no-verify", "-m", BASE_MESSAGE],
        Some(tick),
    )?;
    let base = ws.head()?;
    m.original_state_hash = Some(original.clone());
    m.base_hash = Some(base.clone());
    *memory = m;
    Ok(GitActionResult {
        event: GitEvent::Initialized,
        hash: Some(base.clone()),
        branch: None,
        message: format!("Working base {} created on top of {}.", &base[..12], &original[..12]),
        log: ws.take_log(),
    })
}

pub fn start_hypothesis(
    ws: &mut GitWorkspace,
    memory: &mut WorkingMemoryState,
    branch: &str,
) -> Result<GitActionResult> {
    let branch = branch.trim();
    let (_, base) = require_base(memory)?;
    check_branch(ws, memory, branch)?;
    let name = unbound_in_progress(memory)?;
    let mut m = memory.clone();
    let stash = ws.stash_if_dirty(&mut m, branch)?;
    ws.run(&["checkout", "-q", "-b", branch, &base])?;
    let h = m.hypothesis_mut(&name)?;
    h.branch = Some(branch.to_string());
    h.origin_hash = Some(base.clone());
    m.active = Some(name.clone());
    m.compared = false;
    *memory = m;
    let mut message = format!("Branch `{branch}` created from the working base for hypothesis {name}.");
    if let Some(s) = stash {
        message.push_str(&format!(" Uncommitted changes were stashed as `{s}`."));
    }
    Ok(GitActionResult {
        event: GitEvent::BranchStarted,
        hash: Some(base),
        branch: Some(branch.to_string()),
        message,
        log: ws.take_log(),
    })
}

pub fn commit_todo(
    ws: &mut GitWorkspace,
    memory: &mut WorkingMemoryState,
    todo: &str,
    message: &str,
) -> Result<GitActionResult> {
    let message = message.trim();
    if message.is_empty() {
        return Err(Error::InvalidArgument("commit message must not be empty".into()));
    }
    require_base(memory)?;
    let branch = ws
        .current_branch()?
        .ok_or_else(|| Error::State("HEAD is detached; switch to a hypothesis branch before committing".into()))?;
    let h = memory
        .hypothesis_for_branch(&branch)
        .ok_or_else(|| Error::State(format!("branch `{branch}` does not belong to any hypothesis")))?;
    let name = h.name.clone();
    let idx = h.find_todo(todo)?;
    let content = h.todos[idx].content.clone();
    // dry run on a scratch copy so a doomed checkpoint never reaches git
    let mut m = memory.clone();
    m.record_checkpoint(&name, &content, &"0".repeat(40), message)?;
    let mut m = memory.clone();
    ws.run(&["add", "-A"])?;
    let tick = m.tick();
    ws.run_at(
        &["commit", "-q", "--allow-empty", "--no-verify", "-m", message],
        Some(tick),
    )?;
    let hash = ws.head()?;
    m.record_checkpoint(&name, &content, &hash, message)?;
    *memory = m;
    Ok(GitActionResult {
        event: GitEvent::Committed,
        hash: Some(hash.clone()),
        branch: Some(branch),
        message: format!("Checkpoint {} recorded for to-do `{content}` of {name}.", &hash[..12]),
        log: ws.take_log(),
    })
}

pub fn revert_to(
    ws: &mut GitWorkspace,
    memory: &mut WorkingMemoryState,
    hypothesis: &str,
    todo: &str,
    branch: &str,
) -> Result<GitActionResult> {
    let branch = branch.trim();
    require_base(memory)?;
    let source = memory.hypothesis(hypothesis.trim())?;
    let source_name = source.name.clone();
    let idx = source.find_todo(todo)?;
    let cp = memory
        .lookup_checkpoint(&source_name, &source.todos[idx].content)?
        .clone();
    check_branch(ws, memory, branch)?;
    let target = unbound_in_progress(memory)?;
    let mut m = memory.clone();
    let stash = ws.stash_if_dirty(&mut m, branch)?;
    ws.run(&["checkout", "-q", "-b", branch, &cp.hash])?;
    let src = m.hypothesis_mut(&source_name)?;
    let mut superseded = 0;
    for t in src.todos.iter_mut().skip(idx + 1) {
        if t.status != Status::Failed {
            t.status = Status::Failed;
            superseded += 1;
        }
    }
    let h = m.hypothesis_mut(&target)?;
    h.branch = Some(branch.to_string());
    h.origin_hash = Some(cp.hash.clone());
    m.active = Some(target.clone());
    m.compared = false;
    *memory = m;
    let mut message = format!(
        "Branch `{branch}` created at checkpoint {} ({}) for hypothesis {target}; {superseded} later to-do(s) of {source_name} marked failed.",
        &cp.hash[..12],
        cp.message
    );
    if let Some(s) = stash {
        message.push_str(&format!(" Uncommitted changes were stashed as `{s}`."));
    }
    Ok(GitActionResult {
        event: GitEvent::Reverted,
        hash: Some(cp.hash),
        branch: Some(branch.to_string()),
        message,
        log: ws.take_log(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DiffStat {
    pub files: Vec<(String, usize, usize)>,
}

impl DiffStat {
    pub fn insertions(&self) -> usize {
        self.files.iter().map(|f| f.1).sum()
    }

    pub fn deletions(&self) -> usize {
        self.files.iter().map(|f| f.2).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisComparison {
    pub name: String,
    pub status: Status,
    pub confidence: f64,
    pub branch: Option<String>,
    pub summary: Option<String>,
    pub stat: Option<DiffStat>,
}

pub fn parse_numstat(text: &str) -> DiffStat {
    let files = text
        .lines()
        .filter_map(|l| {
            let mut parts = l.splitn(3, '\t');
            let ins = parts.next()?;
            let del = parts.next()?;
            let path = parts.next()?;
            Some((path.to_string(), ins.parse().unwrap_or(0), del.parse().unwrap_or(0)))
        })
        .collect();
    DiffStat { files }
}

/// Diff statistics of every hypothesis branch tip against the original state.
pub fn compare(ws: &mut GitWorkspace, memory: &WorkingMemoryState) -> Result<Vec<HypothesisComparison>> {
    if memory.hypotheses.is_empty() {
        return Err(Error::Precondition("there are no hypotheses to compare".into()));
    }
    let (original, _) = require_base(memory)?;
    let mut rows = Vec::new();
    for h in &memory.hypotheses {
        let (summary, stat) = match &h.branch {
            Some(b) if ws.branch_exists(b)? => {
                let short = ws.run(&["diff", "--shortstat", &original, b])?.trim().to_string();
                let num = parse_numstat(&ws.run(&["diff", "--numstat", &original, b])?);
                (
                    Some(if short.is_empty() { "no changes".into() } else { short }),
                    Some(num),
                )
            }
            _ => (None, None),
        };
        rows.push(HypothesisComparison {
            name: h.name.clone(),
            status: h.status,
            confidence: h.confidence,
            branch: h.branch.clone(),
            summary,
            stat,
        });
    }
    Ok(rows)
}

pub fn compare_hypotheses(ws: &mut GitWorkspace, memory: &mut WorkingMemoryState) -> Result<GitActionResult> {
    let rows = compare(ws, memory)?;
    let mut text = String::from("Hypothesis comparison report (branch tips against the original state):\n");
    for (r, h) in rows.iter().zip(&memory.hypotheses) {
        text.push_str(&format!(
            "\n## {} {} (confidence: {}): {}\n",
            r.status.tag(),
            r.name,
            r.confidence,
            h.content
        ));
        match (&r.branch, &r.stat) {
            (Some(b), Some(s)) => {
                text.push_str(&format!("branch: {b}\ndiff: {}\n", r.summary.as_deref().unwrap_or("")));
                for (path, ins, del) in &s.files {
                    text.push_str(&format!("    {path} +{ins} -{del}\n"));
                }
            }
            (Some(b), None) => text.push_str(&format!("branch: {b} (missing from the repository)\n")),
            _ => text.push_str("branch: (no branch)\n"),
        }
        for t in &h.todos {
            text.push_str(&format!("  {} {} ({})", t.status.tag(), t.content, t.action.as_str()));
            if let Some(cp) = &t.checkpoint {
                text.push_str(&format!(" [{}: {}]", &cp.hash[..12], cp.message));
            }
            text.push('\n');
        }
        for i in memory
            .insights
            .iter()
            .filter(|i| i.hypothesis.as_deref() == Some(&h.name))
        {
            text.push_str(&format!("  insight #{}: {}\n", i.timestamp, i.text));
        }
    }
    let global: Vec<_> = memory.insights.iter().filter(|i| i.hypothesis.is_none()).collect();
    if !global.is_empty() {
        text.push_str("\n## General insights\n");
        for i in global {
            text.push_str(&format!("  insight #{}: {}\n", i.timestamp, i.text));
        }
    }
    memory.compared = true;
    Ok(GitActionResult {
        event: GitEvent::Compared,
        hash: None,
        branch: None,
        message: text,
        log: ws.take_log(),
    })
}

pub fn merge_solution(ws: &mut GitWorkspace, memory: &mut WorkingMemoryState, branch: &str) -> Result<GitActionResult> {
    let branch = branch.trim();
    let (original, _) = require_base(memory)?;
    if let Some(done) = &memory.merged_branch {
        return Err(Error::conflict(format!(
            "branch `{done}` has already been merged; a solution is merged only once"
        )));
    }
    let bound: Vec<String> = memory.hypotheses.iter().filter_map(|h| h.branch.clone()).collect();
    let Some(h) = memory.hypothesis_for_branch(branch) else {
        return Err(Error::NotFound {
            what: format!("hypothesis branch `{branch}`"),
            suggestions: bound,
        });
    };
    let name = h.name.clone();
    if bound.len() > 1 && !memory.compared {
        return Err(Error::Precondition(
            "several hypothesis branches exist; run `hypothesis_git compare_hypotheses` before merging".into(),
        ));
    }
    if !ws.branch_exists(branch)? {
        return Err(Error::NotFound {
            what: format!("git branch `{branch}`"),
            suggestions: bound,
        });
    }
    let mut m = memory.clone();
    ws.stash_if_dirty(&mut m, "merge")?;
    ws.run(&["checkout", "-q", "--detach", &original])?;
    let tick = m.tick();
    let out = ws.raw(&["merge", "--no-edit", "-q", branch], Some(tick))?;
    if out.code != 0 {
        let paths: Vec<String> = ws
            .run(&["diff", "--name-only", "--diff-filter=U"])?
            .lines()
            .map(str::to_string)
            .collect();
        ws.raw(&["merge", "--abort"], None)?;
        if paths.is_empty() {
            return Err(Error::Git {
                message: format!("merge of `{branch}` failed: {}", out.stderr.trim()),
                log: ws.take_log(),
            });
        }
        return Err(Error::MergeConflict { paths });
    }
    let hash = ws.head()?;
    m.merged_branch = Some(branch.to_string());
    *memory = m;
    Ok(GitActionResult {
        event: GitEvent::Merged,
        hash: Some(hash.clone()),
        branch: Some(branch.to_string()),
        message: format!(
            "Branch `{branch}` (hypothesis {name}) merged onto the original state; HEAD is now {}.",
            &hash[..12]
        ),
        log: ws.take_log(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_names_are_sanitized() {
        assert_eq!(sanitize_branch("Fix Parser!"), "fix-parser");
        assert_eq!(sanitize_branch("h1/null..check"), "h1/null.check");
        assert_eq!(sanitize_branch("a.lock"), "a");
        assert_eq!(sanitize_branch(&"x".repeat(100)).len(), 80);
        assert_eq!(sanitize_branch("ok-name_1.2"), "ok-name_1.2");
    }

    #[test]
    fn numstat_parsing() {
        let s = parse_numstat("3\t1\tsrc/a.py\n-\t-\tbin.dat\n");
        assert_eq!(s.files.len(), 2);
        assert_eq!((s.insertions(), s.deletions()), (3, 1));
    }
}
