//! The resolution agent: a tool-calling loop over a sandboxed workspace,
//! the planning and version-control tool families, and patch finalization.

use std::collections::BTreeSet;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{GitConfig, ResolutionConfig};
use crate::fsutil::write_atomic;
use crate::llm::{ChatRequest, LlmClient, Message, Phase};
use crate::localize::{RankedLocations, RunFailure};
use crate::memory::{Status, WorkingMemoryState};
use crate::prompts::{render, ResolutionPrompts};
use crate::tools::cli::{self, CommandOutcome, ToolContext};
use crate::tools::git::{self, GitEvent, GitWorkspace};
use crate::trajectory::{BehaviorFlags, Invocation, Trajectory};
use crate::{Error, Result};

pub const BASH: &str = "bash";
pub const VIEW_FILE: &str = "view_file";
pub const EDIT_FILE: &str = "edit_file";
pub const CREATE_FILE: &str = "create_file";
pub const SUBMIT: &str = "submit";

#[derive(Debug, Clone)]
pub struct ResolutionTask {
    pub instance_id: String,
    pub repo_name: String,
    pub issue: String,
    pub locations: RankedLocations,
    pub workspace: PathBuf,
    /// Working-memory file shared with the `hypothesis_*` commands.
    pub memory_path: PathBuf,
}

impl ResolutionTask {
    pub fn validate(&self) -> Result<()> {
        if self.issue.trim().is_empty() {
            return Err(Error::InvalidTask("issue description is empty".into()));
        }
        if !self.workspace.join(".git").exists() {
            return Err(Error::InvalidTask(format!(
                "workspace {} is not a git checkout",
                self.workspace.display()
            )));
        }
        // a memory file inside the checkout would end up in the patch
        let memory = std::path::absolute(&self.memory_path).unwrap_or_else(|_| self.memory_path.clone());
        let roots = [
            std::path::absolute(&self.workspace).ok(),
            self.workspace.canonicalize().ok(),
        ];
        if roots.iter().flatten().any(|r| memory.starts_with(r)) {
            return Err(Error::InvalidTask(format!(
                "memory file {} lies inside the workspace; point the registry elsewhere",
                self.memory_path.display()
            )));
        }
        Ok(())
    }
}

/// The submitted change: a unified diff against the original state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchArtifact {
    pub instance_id: String,
    pub original_hash: String,
    pub diff: String,
    pub files: Vec<String>,
    pub hunks: usize,
    pub hypothesis: Option<String>,
    pub branch: Option<String>,
    /// Produced without an agent submission (budget ran out).
    pub degraded: bool,
    /// The diff is empty.
    pub no_op: bool,
}

#[derive(Debug, Clone)]
pub struct ResolutionOutcome {
    pub patch: PatchArtifact,
    pub trajectory: Trajectory,
    pub memory: WorkingMemoryState,
}

pub fn tool_schemas() -> Vec<Value> {
    vec![
        json!({
            "name": BASH,
            "description": "Run a shell command in the repository root. `hypothesis_plan` and `hypothesis_git` commands are available here.",
            "parameters": {"type": "object", "properties": {"command": {"type": "string"}}, "required": ["command"]}
        }),
        json!({
            "name": VIEW_FILE,
            "description": "Show a file with line numbers, optionally limited to view_range [start, end].",
            "parameters": {"type": "object", "properties": {
                "path": {"type": "string"},
                "view_range": {"type": "array", "items": {"type": "integer"}}
            }, "required": ["path"]}
        }),
        json!({
            "name": EDIT_FILE,
            "description": "Replace the single exact occurrence of old_str in a file with new_str.",
            "parameters": {"type": "object", "properties": {
                "path": {"type": "string"},
                "old_str": {"type": "string"},
                "new_str": {"type": "string"}
            }, "required": ["path", "old_str", "new_str"]}
        }),
        json!({
            "name": CREATE_FILE,
            "description": "Create a new file with the given content.",
            "parameters": {"type": "object", "properties": {
                "path": {"type": "string"},
                "content": {"type": "string"}
            }, "required": ["path", "content"]}
        }),
        json!({
            "name": SUBMIT,
            "description": "Show the final changes; call it a second time to submit them.",
            "parameters": {"type": "object", "properties": {}}
        }),
    ]
}

/// Keeps the last `limit` characters, noting how much was dropped.
pub fn truncate_tail(text: &str, limit: usize) -> String {
    let n = text.chars().count();
    if n <= limit {
        return text.to_string();
    }
    let skip = n - limit;
    let start = text.char_indices().nth(skip).map_or(text.len(), |(i, _)| i);
    format!("[... {skip} earlier characters truncated ...]\n{}", &text[start..])
}

/// Lexically resolves `p` against `base`; `None` when `..` climbs above
/// the filesystem root.
fn lexical(base: &Path, p: &Path) -> Option<PathBuf> {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut out = PathBuf::new();
    for c in joined.components() {
        match c {
            Component::ParentDir => {
                if !out.pop() {
                    return None;
                }
            }
            Component::CurDir => {}
            other => out.push(other),
        }
    }
    Some(out)
}

/// Workspace sandbox: path checks and command execution.
#[derive(Debug, Clone)]
pub struct Sandbox {
    root: PathBuf,
    allowed: Vec<String>,
    timeout: Duration,
    limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellResult {
    pub exit_code: Option<i32>,
    pub output: String,
    pub timed_out: bool,
}

impl Sandbox {
    pub fn new(root: &Path, config: &ResolutionConfig) -> Result<Self> {
        let root = root.canonicalize().map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root,
            allowed: config.allowed_system_paths.clone(),
            timeout: Duration::from_secs(config.command_timeout_secs),
            limit: config.observation_chars,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// A path inside the workspace (never inside `.git`), as given by a file tool.
    pub fn resolve(&self, path: &str) -> Result<PathBuf> {
        let full = lexical(&self.root, Path::new(path.trim()))
            .filter(|p| p.starts_with(&self.root))
            .ok_or_else(|| Error::Sandbox(format!("path `{path}` is outside the workspace")))?;
        if full.strip_prefix(&self.root).is_ok_and(|r| r.starts_with(".git")) {
            return Err(Error::Sandbox(format!(
                "path `{path}` is inside the repository metadata"
            )));
        }
        Ok(full)
    }

    /// Lexical check of every path-like word in a shell command: absolute
    /// paths must lie in the workspace or an allowed system prefix, and
    /// relative paths must not climb out of the workspace.
    pub fn check_command(&self, command: &str) -> Result<()> {
        let words = shlex::split(command).ok_or_else(|| Error::Sandbox("command has unbalanced quotes".into()))?;
        for word in &words {
            let word = word.trim_start_matches(['<', '>', '&', '|', ';', '(', '0', '1', '2']);
            let candidates = std::iter::once(word).chain(word.split_once('=').map(|(_, v)| v));
            for c in candidates {
                if c.starts_with('~') {
                    return Err(Error::Sandbox(format!("`{c}` refers to a home directory")));
                }
                let abs = c.starts_with('/');
                if !abs && !c.split('/').any(|s| s == "..") {
                    continue;
                }
                if abs && self.allowed.iter().any(|a| c.starts_with(a.as_str())) {
                    continue;
                }
                let inside = lexical(&self.root, Path::new(c)).is_some_and(|p| p.starts_with(&self.root));
                if !inside {
                    return Err(Error::Sandbox(format!("`{c}` is outside the workspace")));
                }
            }
        }
        Ok(())
    }

    /// Runs `bash -c command` in the workspace with stdout and stderr
    /// interleaved, killing the whole process group on timeout.
    pub fn run(&self, command: &str) -> Result<ShellResult> {
        self.check_command(command)?;
        let (mut reader, writer) = std::io::pipe().map_err(|e| Error::io(&self.root, e))?;
        let mut cmd = Command::new("bash");
        cmd.arg("-c")
            .arg(command)
            .current_dir(&self.root)
            .env("HOME", &self.root)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("GIT_TERMINAL_PROMPT", "0")
            .stdin(Stdio::null())
            .stdout(writer.try_clone().map_err(|e| Error::io(&self.root, e))?)
            .stderr(writer)
            .process_group(0);
        let mut child = cmd.spawn().map_err(|e| Error::io(&self.root, e))?;
        drop(cmd);
        let pump = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = reader.read_to_end(&mut buf);
            buf
        });
        let start = Instant::now();
        let mut timed_out = false;
        let status = loop {
            if let Some(st) = child.try_wait().map_err(|e| Error::io(&self.root, e))? {
                break Some(st);
            }
            if start.elapsed() > self.timeout {
                timed_out = true;
                let _ = Command::new("kill")
                    .args(["-s", "KILL", "--", &format!("-{}", child.id())])
                    .status();
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let bytes = pump.join().unwrap_or_default();
        Ok(ShellResult {
            exit_code: status.and_then(|s| s.code()),
            output: truncate_tail(&String::from_utf8_lossy(&bytes), self.limit),
            timed_out,
        })
    }

    pub fn view(&self, path: &str, range: Option<(usize, usize)>) -> Result<String> {
        let full = self.resolve(path)?;
        let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
        let lines: Vec<&str> = text.lines().collect();
        let (lo, hi) = match range {
            Some((a, b)) => {
                let b = if b == 0 { lines.len() } else { b.min(lines.len()) };
                if a == 0 || a > b {
                    return Err(Error::InvalidArgument(format!(
                        "view_range [{a}, {b}] is invalid for a file with {} lines",
                        lines.len()
                    )));
                }
                (a, b)
            }
            None => (1, lines.len()),
        };
        let mut out = String::new();
        for (i, l) in lines.iter().enumerate().take(hi).skip(lo - 1) {
            out.push_str(&format!("{:>5} | {l}\n", i + 1));
        }
        Ok(truncate_tail(&out, self.limit))
    }

    pub fn edit(&self, path: &str, old: &str, new: &str) -> Result<String> {
        let full = self.resolve(path)?;
        let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
        if old.is_empty() {
            return Err(Error::InvalidArgument(
                "edit rejected: old_str must not be empty".into(),
            ));
        }
        let count = text.matches(old).count();
        if count != 1 {
            return Err(Error::InvalidArgument(format!(
                "edit rejected: old_str occurs {count} times in {path}; it must match exactly once"
            )));
        }
        let updated = text.replacen(old, new, 1);
        write_atomic(&full, updated.as_bytes())?;
        let line = text[..text.find(old).unwrap()].matches('\n').count() + 1;
        Ok(format!("Edited {path} at line {line}."))
    }

    pub fn create(&self, path: &str, content: &str) -> Result<String> {
        let full = self.resolve(path)?;
        if full.exists() {
            return Err(Error::InvalidArgument(format!(
                "{path} already exists; use edit_file to change it"
            )));
        }
        write_atomic(&full, content.as_bytes())?;
        Ok(format!("Created {path} ({} lines).", content.lines().count()))
    }
}

fn glob_set(patterns: &[String]) -> Result<GlobSet> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        b.add(Glob::new(p).map_err(|e| Error::Config(format!("bad pattern `{p}`: {e}")))?);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

fn is_test_file(path: &str) -> bool {
    let name = path.rsplit('/').next().unwrap_or(path);
    path.split('/').any(|c| c == "tests" || c == "test")
        || (name.starts_with("test_") && name.ends_with(".py"))
        || name.ends_with("_test.py")
}

/// Stages everything and returns the diff of the index against `original`.
fn staged_diff(ws: &mut GitWorkspace, original: &str) -> Result<String> {
    ws.ensure_excludes()?;
    ws.run(&["add", "-A"])?;
    ws.run(&["diff", "--cached", "--binary", "--no-color", "--no-ext-diff", original])
}

/// Applies the submission checklist (drop reproduction scripts, restore
/// modified test files), computes the diff against the original state and
/// verifies that applying it to a clean checkout of that state yields the
/// same tree.
pub fn finalize_submission(
    workspace: &Path,
    original: &str,
    config: &ResolutionConfig,
    git_config: &GitConfig,
    instance_id: &str,
) -> Result<PatchArtifact> {
    let mut ws = GitWorkspace::new(workspace, git_config);
    ws.ensure_excludes()?;
    ws.run(&["add", "-A"])?;
    let status = ws.run(&["diff", "--cached", "--name-status", "--no-renames", original])?;
    let repro = glob_set(&config.repro_patterns)?;
    for line in status.lines() {
        let Some((kind, path)) = line.split_once('\t') else {
            continue;
        };
        let name = path.rsplit('/').next().unwrap_or(path);
        if kind == "A" && repro.is_match(name) {
            let full = workspace.join(path);
            std::fs::remove_file(&full).map_err(|e| Error::io(&full, e))?;
        } else if config.restore_test_files && matches!(kind, "M" | "D") && is_test_file(path) {
            ws.run(&["checkout", original, "--", path])?;
        }
    }
    let diff = staged_diff(&mut ws, original)?;
    let tree = ws.run(&["write-tree"])?.trim().to_string();
    verify_patch(&mut ws, original, &diff, &tree)?;
    let files: Vec<String> = ws
        .run(&["diff", "--cached", "--name-only", "--no-renames", original])?
        .lines()
        .map(str::to_string)
        .collect();
    let hunks = diff.lines().filter(|l| l.starts_with("@@")).count();
    Ok(PatchArtifact {
        instance_id: instance_id.to_string(),
        original_hash: original.to_string(),
        no_op: diff.is_empty(),
        diff,
        files,
        hunks,
        hypothesis: None,
        branch: None,
        degraded: false,
    })
}

fn verify_patch(ws: &mut GitWorkspace, original: &str, diff: &str, tree: &str) -> Result<()> {
    let tmp = tempfile::tempdir().map_err(|e| Error::io(Path::new("tempdir"), e))?;
    let dir = tmp.path().join("verify");
    let dir_s = dir.to_string_lossy().to_string();
    ws.run(&["worktree", "add", "--detach", "-q", &dir_s, original])?;
    let result = (|| {
        let mut check = GitWorkspace::new(&dir, &GitConfig::default());
        if !diff.is_empty() {
            let patch = tmp.path().join("submission.patch");
            std::fs::write(&patch, diff).map_err(|e| Error::io(&patch, e))?;
            check.run(&[
                "apply",
                "--index",
                "--binary",
                "--whitespace=nowarn",
                &patch.to_string_lossy(),
            ])?;
        }
        let got = check.run(&["write-tree"])?.trim().to_string();
        if got != tree {
            return Err(Error::Consistency(format!(
                "applying the patch to {} gives tree {got}, expected {tree}",
                &original[..12.min(original.len())]
            )));
        }
        Ok(())
    })();
    ws.run(&["worktree", "remove", "--force", &dir_s])?;
    result
}

/// Behavior flags recomputed from the recorded effects of tool calls.
pub fn flags_from_log(invocations: &[Invocation]) -> (BehaviorFlags, usize) {
    let effect = |e: &str| {
        invocations
            .iter()
            .filter(|i| i.ok && i.effect.as_deref() == Some(e))
            .count()
    };
    let branches = effect("branch_started") + effect("reverted");
    (
        BehaviorFlags {
            multi_hypothesis: branches >= 2,
            reversion: effect("reverted") >= 1,
            expansion: effect("expanded") >= 1,
        },
        branches,
    )
}

fn effect_name(outcome: &CommandOutcome) -> Option<String> {
    if outcome.expanded {
        return Some("expanded".into());
    }
    outcome.event.as_ref().map(|e| {
        match e {
            GitEvent::Initialized => "initialized",
            GitEvent::BranchStarted => "branch_started",
            GitEvent::Committed => "committed",
            GitEvent::Reverted => "reverted",
            GitEvent::Compared => "compared",
            GitEvent::Merged => "merged",
        }
        .to_string()
    })
}

fn str_arg<'a>(args: &'a Value, key: &str) -> Result<&'a str> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::InvalidArgument(format!("missing string argument `{key}`")))
}

struct Step {
    text: String,
    ok: bool,
    malformed: bool,
    effect: Option<String>,
    submitted: Option<PatchArtifact>,
}

impl Step {
    fn ok(text: String) -> Self {
        Self {
            text,
            ok: true,
            malformed: false,
            effect: None,
            submitted: None,
        }
    }

    fn err(text: String) -> Self {
        Self {
            text,
            ok: false,
            malformed: false,
            effect: None,
            submitted: None,
        }
    }
}

pub struct Resolver {
    config: ResolutionConfig,
    git: GitConfig,
    prompts: ResolutionPrompts,
}

struct Session<'t> {
    task: &'t ResolutionTask,
    sandbox: Sandbox,
    ctx: ToolContext,
    /// HEAD when the run started; used when the agent never initialized a base.
    start_head: String,
    submit_shown: bool,
}

impl Resolver {
    pub fn new(config: &ResolutionConfig, git: &GitConfig, prompts: ResolutionPrompts) -> Self {
        Self {
            config: config.clone(),
            git: git.clone(),
            prompts,
        }
    }

    pub fn run(&self, task: &ResolutionTask, client: &mut dyn LlmClient) -> Result<ResolutionOutcome, RunFailure> {
        let mut trajectory = Trajectory::default();
        match self.drive(task, client, &mut trajectory) {
            Ok((patch, memory)) => Ok(ResolutionOutcome {
                patch,
                trajectory,
                memory,
            }),
            Err(error) => Err(RunFailure {
                error,
                trajectory: Box::new(trajectory),
            }),
        }
    }

    fn drive(
        &self,
        task: &ResolutionTask,
        client: &mut dyn LlmClient,
        trajectory: &mut Trajectory,
    ) -> Result<(PatchArtifact, WorkingMemoryState)> {
        task.validate()?;
        if self.config.turn_budget == 0 {
            return Err(Error::InvalidTask("turn budget must be positive".into()));
        }
        let sandbox = Sandbox::new(&task.workspace, &self.config)?;
        let mut ws = GitWorkspace::new(sandbox.root(), &self.git);
        let start_head = ws.head()?;
        ws.ensure_excludes()?;
        let mut session = Session {
            task,
            ctx: ToolContext {
                workspace: sandbox.root().to_path_buf(),
                memory_path: task.memory_path.clone(),
                git: self.git.clone(),
            },
            sandbox,
            start_head,
            submit_shown: false,
        };

        let hints = if task.locations.is_empty() {
            trajectory.warn("no code-location hints; resolving without localization");
            "(none available: the localization step returned no locations, so start by exploring the repository)"
                .to_string()
        } else {
            task.locations.render_hints()
        };
        let mut messages = vec![
            Message::system(&self.prompts.system),
            Message::user(render(
                &self.prompts.instance,
                &[
                    ("repo_name", &task.repo_name),
                    ("issue_description", &task.issue),
                    ("code_location_hints", &hints),
                ],
            )),
        ];
        let schemas = tool_schemas();
        while trajectory.turns < self.config.turn_budget {
            if self
                .config
                .token_ceiling
                .is_some_and(|c| trajectory.total_tokens() >= c)
            {
                trajectory.warn("token ceiling reached");
                break;
            }
            let reply = client.complete(&ChatRequest {
                phase: Phase::Resolve,
                messages: &messages,
                tools: &schemas,
            })?;
            let turn = trajectory.record_turn(Phase::Resolve, reply.usage);
            messages.push(Message::assistant(&reply));
            if reply.tool_calls.is_empty() {
                messages.push(Message::user(render(
                    &self.prompts.next_action,
                    &[(
                        "observation",
                        "No tool was called. Continue with a tool call; use `submit` when done.",
                    )],
                )));
                continue;
            }
            for call in &reply.tool_calls {
                let step = self.execute(&mut session, &call.name, &call.arguments);
                trajectory.invocations.push(Invocation {
                    turn,
                    phase: Phase::Resolve,
                    name: call.name.clone(),
                    args: call.arguments.clone(),
                    ok: step.ok,
                    malformed: step.malformed,
                    response_chars: step.text.len(),
                    units: Vec::new(),
                    depth: None,
                    effect: step.effect.clone(),
                });
                messages.push(Message::tool(
                    &call.id,
                    render(&self.prompts.next_action, &[("observation", &step.text)]),
                ));
                if let Some(mut patch) = step.submitted {
                    let memory = WorkingMemoryState::load_or_default(&task.memory_path)?;
                    self.finish_flags(trajectory);
                    annotate(&mut patch, &memory);
                    return Ok((patch, memory));
                }
            }
        }
        trajectory.warn(format!(
            "budget exhausted after {} turns without a submission; submitting the best branch",
            trajectory.turns
        ));
        self.finish_flags(trajectory);
        trajectory.degraded = true;
        let (patch, memory) = self.degraded_submission(&mut session)?;
        Ok((patch, memory))
    }

    fn finish_flags(&self, trajectory: &mut Trajectory) {
        let (flags, branches) = flags_from_log(&trajectory.invocations);
        trajectory.flags = flags;
        trajectory.hypothesis_count = branches;
    }

    fn execute(&self, s: &mut Session<'_>, name: &str, args: &Value) -> Step {
        let result = match name {
            BASH => return self.bash(s, args),
            VIEW_FILE => str_arg(args, "path").and_then(|p| {
                let range = args.get("view_range").and_then(Value::as_array).and_then(|r| {
                    Some((
                        r.first()?.as_u64()? as usize,
                        r.get(1)?.as_i64().map_or(0, |v| v.max(0) as usize),
                    ))
                });
                s.sandbox.view(p, range)
            }),
            EDIT_FILE => (|| {
                let (p, old, new) = (
                    str_arg(args, "path")?,
                    str_arg(args, "old_str")?,
                    str_arg(args, "new_str")?,
                );
                s.sandbox.edit(p, old, new)
            })(),
            CREATE_FILE => (|| s.sandbox.create(str_arg(args, "path")?, str_arg(args, "content")?))(),
            SUBMIT => return self.submit(s),
            other => {
                let mut step = Step::err(format!(
                    "Error: unknown tool `{other}`; available tools: bash, view_file, edit_file, create_file, submit"
                ));
                step.malformed = true;
                return step;
            }
        };
        match result {
            Ok(text) => Step::ok(text),
            Err(e @ Error::InvalidArgument(_)) if e.to_string().contains("missing string argument") => {
                let mut step = Step::err(format!("Error: {e}"));
                step.malformed = true;
                step
            }
            Err(e) => Step::err(format!("Error: {e}")),
        }
    }

    fn bash(&self, s: &mut Session<'_>, args: &Value) -> Step {
        let command = match str_arg(args, "command") {
            Ok(c) => c.trim().to_string(),
            Err(e) => {
                let mut step = Step::err(format!("Error: {e}"));
                step.malformed = true;
                return step;
            }
        };
        let first = command.split_whitespace().next().unwrap_or("");
        if first == cli::PLAN || first == cli::GIT {
            let words = match shlex::split(&command) {
                Some(w) => w,
                None => return Step::err(format!("{first}: invalid arguments\ncommand has unbalanced quotes")),
            };
            return match cli::dispatch(first, &words[1..], &s.ctx) {
                Ok(outcome) => {
                    let mut step = Step::ok(outcome.text.clone());
                    step.effect = effect_name(&outcome);
                    step
                }
                Err(e) => Step::err(cli::error_text(first, &e)),
            };
        }
        match s.sandbox.run(&command) {
            Ok(r) if r.timed_out => Step::err(format!(
                "command timed out after {} seconds\n{}",
                self.config.command_timeout_secs, r.output
            )),
            Ok(r) => {
                let code = r.exit_code.unwrap_or(-1);
                let text = if r.output.is_empty() {
                    format!("(exit code {code}, no output)")
                } else {
                    format!("{}\n(exit code {code})", r.output.trim_end())
                };
                // a failing command is still a successful tool execution
                Step::ok(text)
            }
            Err(e) => Step::err(format!("Error: {e}")),
        }
    }

    /// The original state a submission is diffed against.
    fn original(&self, s: &Session<'_>) -> Result<(String, WorkingMemoryState)> {
        let memory = WorkingMemoryState::load_or_default(&s.task.memory_path)?;
        if memory.base_hash.is_some() && memory.merged_branch.is_none() {
            return Err(Error::Precondition(
                "merge the selected hypothesis branch with `hypothesis_git merge_solution` before submitting".into(),
            ));
        }
        let original = memory
            .original_state_hash
            .clone()
            .unwrap_or_else(|| s.start_head.clone());
        Ok((original, memory))
    }

    fn submit(&self, s: &mut Session<'_>) -> Step {
        let (original, _) = match self.original(s) {
            Ok(v) => v,
            Err(e) => return Step::err(format!("Error: {e}")),
        };
        if !s.submit_shown {
            let mut ws = GitWorkspace::new(s.sandbox.root(), &self.git);
            return match staged_diff(&mut ws, &original) {
                Ok(diff) => {
                    s.submit_shown = true;
                    let shown = if diff.is_empty() {
                        "(no changes)".to_string()
                    } else {
                        truncate_tail(&diff, self.config.observation_chars)
                    };
                    Step::ok(render(&self.prompts.submission, &[("code_diff", &shown)]))
                }
                Err(e) => Step::err(format!("Error: {e}")),
            };
        }
        match finalize_submission(
            s.sandbox.root(),
            &original,
            &self.config,
            &self.git,
            &s.task.instance_id,
        ) {
            Ok(patch) => {
                let mut step = Step::ok(format!(
                    "Submitted {} file(s), {} hunk(s){}.",
                    patch.files.len(),
                    patch.hunks,
                    if patch.no_op { " (no-op: the diff is empty)" } else { "" }
                ));
                step.effect = Some("submitted".into());
                step.submitted = Some(patch);
                step
            }
            Err(e) => Step::err(format!("Error: submission blocked: {e}")),
        }
    }

    /// Budget ran out: merge the most promising branch if nothing was merged
    /// yet, then finalize whatever the workspace holds.
    fn degraded_submission(&self, s: &mut Session<'_>) -> Result<(PatchArtifact, WorkingMemoryState)> {
        let _lock = crate::memory::ActionLock::acquire(&s.task.memory_path.with_extension("lock"))?;
        let mut memory = WorkingMemoryState::load_or_default(&s.task.memory_path)?;
        let mut ws = GitWorkspace::new(s.sandbox.root(), &self.git);
        if memory.base_hash.is_some() && memory.merged_branch.is_none() {
            if let Some(branch) = best_branch(&memory) {
                memory.compared = true;
                if git::merge_solution(&mut ws, &mut memory, &branch).is_err() {
                    memory.compared = false;
                }
            }
        }
        let original = memory
            .original_state_hash
            .clone()
            .unwrap_or_else(|| s.start_head.clone());
        let mut patch = finalize_submission(
            s.sandbox.root(),
            &original,
            &self.config,
            &self.git,
            &s.task.instance_id,
        )?;
        memory.save(&s.task.memory_path)?;
        annotate(&mut patch, &memory);
        patch.degraded = true;
        Ok((patch, memory))
    }
}

/// Highest status first (successful, in progress, pending, failed), then
/// confidence, then document order.
pub fn best_branch(memory: &WorkingMemoryState) -> Option<String> {
    let rank = |s: Status| match s {
        Status::Successful => 0,
        Status::InProgress => 1,
        Status::Pending => 2,
        Status::Failed => 3,
    };
    memory
        .hypotheses
        .iter()
        .enumerate()
        .filter(|(_, h)| h.branch.is_some())
        .min_by(|(i, a), (j, b)| {
            rank(a.status)
                .cmp(&rank(b.status))
                .then(b.confidence.total_cmp(&a.confidence))
                .then(i.cmp(j))
        })
        .and_then(|(_, h)| h.branch.clone())
}

fn annotate(patch: &mut PatchArtifact, memory: &WorkingMemoryState) {
    if let Some(b) = &memory.merged_branch {
        patch.branch = Some(b.clone());
        patch.hypothesis = memory.hypothesis_for_branch(b).map(|h| h.name.clone());
    }
}

/// Paths touched by a unified diff (post-image names).
pub fn diff_files(diff: &str) -> BTreeSet<String> {
    diff.lines()
        .filter_map(|l| l.strip_prefix("diff --git a/"))
        .filter_map(|l| l.split_once(" b/").map(|(_, b)| b.to_string()))
        .collect()
}
