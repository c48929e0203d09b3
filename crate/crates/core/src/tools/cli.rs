//! `hypothesis_plan <command> --param <value>...` and
//! `hypothesis_git <command> --param <value>...` argument handling.
//!
//! Each invocation loads the working memory, runs one command under the
//! per-instance lock and saves the memory only when the command succeeded.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::config::GitConfig;
use crate::memory::{ActionLock, WorkingMemoryState};
use crate::tools::git::{self, GitEvent, GitWorkspace};
use crate::tools::plan;
use crate::{Error, Result};

pub const PLAN: &str = "hypothesis_plan";
pub const GIT: &str = "hypothesis_git";

/// Where a tool invocation acts: the agent workspace and its memory file.
#[derive(Debug, Clone)]
pub struct ToolContext {
    pub workspace: PathBuf,
    pub memory_path: PathBuf,
    pub git: GitConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub text: String,
    /// An update_todo call grew the list of an in-progress hypothesis.
    pub expanded: bool,
    pub event: Option<GitEvent>,
}

struct Spec {
    name: &'static str,
    params: &'static [&'static str],
}

const PLAN_COMMANDS: &[Spec] = &[
    Spec {
        name: "update_hypothesis",
        params: &["hypotheses_markdown"],
    },
    Spec {
        name: "update_todo",
        params: &["current_hypothesis", "todos_markdown"],
    },
    Spec {
        name: "log_insight",
        params: &["insight"],
    },
];

const GIT_COMMANDS: &[Spec] = &[
    Spec {
        name: "init_base",
        params: &[],
    },
    Spec {
        name: "start_hypothesis",
        params: &["branch_name"],
    },
    Spec {
        name: "commit_todo",
        params: &["todo_content", "commit_message"],
    },
    Spec {
        name: "revert_to",
        params: &["source_hypothesis", "source_todo", "new_branch_name"],
    },
    Spec {
        name: "compare_hypotheses",
        params: &[],
    },
    Spec {
        name: "merge_solution",
        params: &["branch_name"],
    },
];

pub fn usage(family: &str) -> String {
    let specs = match family {
        PLAN => PLAN_COMMANDS,
        _ => GIT_COMMANDS,
    };
    let mut out = format!("usage: {family} <command> --param <value>...\ncommands:\n");
    for s in specs {
        out.push_str(&format!("  {}", s.name));
        for p in s.params {
            out.push_str(&format!(" --{p} <value>"));
        }
        out.push('\n');
    }
    out
}

/// Splits `<command> --a x --b=y` into the command and its parameters,
/// checking names against the command's declared parameters.
fn parse(family: &str, specs: &'static [Spec], args: &[String]) -> Result<(&'static str, BTreeMap<String, String>)> {
    let Some(cmd) = args.first() else {
        return Err(Error::InvalidArgument(format!("missing command\n{}", usage(family))));
    };
    let spec = specs
        .iter()
        .find(|s| s.name == cmd)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown command `{cmd}`\n{}", usage(family))))?;
    let mut params = BTreeMap::new();
    let mut it = args[1..].iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::InvalidArgument(format!(
                "unexpected argument `{arg}`; parameters are passed as --name <value>"
            )));
        };
        let (name, value) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::InvalidArgument(format!("parameter --{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        if !spec.params.contains(&name.as_str()) {
            let expected = if spec.params.is_empty() {
                "no parameters".to_string()
            } else {
                spec.params
                    .iter()
                    .map(|p| format!("--{p}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            return Err(Error::InvalidArgument(format!(
                "`{}` does not take --{name}; expected {expected}",
                spec.name
            )));
        }
        if params.insert(name.clone(), value).is_some() {
            return Err(Error::InvalidArgument(format!("parameter --{name} given twice")));
        }
    }
    if let Some(missing) = spec.params.iter().find(|p| !params.contains_key(**p)) {
        return Err(Error::InvalidArgument(format!("`{}` requires --{missing}", spec.name)));
    }
    Ok((spec.name, params))
}

/// Runs one command of either family.
pub fn dispatch(family: &str, args: &[String], ctx: &ToolContext) -> Result<CommandOutcome> {
    let specs = match family {
        PLAN => PLAN_COMMANDS,
        GIT => GIT_COMMANDS,
        other => return Err(Error::InvalidArgument(format!("unknown tool family `{other}`"))),
    };
    let (cmd, p) = parse(family, specs, args)?;
    let _lock = ActionLock::acquire(&ctx.memory_path.with_extension("lock"))?;
    let mut memory = WorkingMemoryState::load_or_default(&ctx.memory_path)?;
    let outcome = run(family, cmd, &p, &mut memory, ctx)?;
    memory.save(&ctx.memory_path)?;
    Ok(outcome)
}

fn run(
    family: &str,
    cmd: &str,
    p: &BTreeMap<String, String>,
    memory: &mut WorkingMemoryState,
    ctx: &ToolContext,
) -> Result<CommandOutcome> {
    let arg = |k: &str| p[k].as_str();
    if family == PLAN {
        let out = match cmd {
            "update_hypothesis" => plan::update_hypothesis(memory, arg("hypotheses_markdown"))?,
            "update_todo" => plan::update_todo(memory, arg("current_hypothesis"), arg("todos_markdown"))?,
            _ => plan::log_insight(memory, arg("insight"))?,
        };
        return Ok(CommandOutcome {
            text: out.text,
            expanded: out.expanded,
            event: None,
        });
    }
    let mut ws = GitWorkspace::new(&ctx.workspace, &ctx.git);
    let result = match cmd {
        "init_base" => git::init_base(&mut ws, memory)?,
        "start_hypothesis" => git::start_hypothesis(&mut ws, memory, arg("branch_name"))?,
        "commit_todo" => git::commit_todo(&mut ws, memory, arg("todo_content"), arg("commit_message"))?,
        "revert_to" => git::revert_to(
            &mut ws,
            memory,
            arg("source_hypothesis"),
            arg("source_todo"),
            arg("new_branch_name"),
        )?,
        "compare_hypotheses" => git::compare_hypotheses(&mut ws, memory)?,
        _ => git::merge_solution(&mut ws, memory, arg("branch_name"))?,
    };
    Ok(CommandOutcome {
        text: result.render(),
        expanded: false,
        event: Some(result.event),
    })
}

/// Structured failure text for agent observations and the binaries' stderr.
pub fn error_text(family: &str, err: &Error) -> String {
    let kind = match err {
        Error::Parse { .. } => "parse error",
        Error::NotFound { .. } => "not found",
        Error::Conflict { .. } => "conflict",
        Error::Ambiguous { .. } => "ambiguous",
        Error::Precondition(_) => "precondition failed",
        Error::State(_) => "invalid state",
        Error::MergeConflict { .. } => "merge conflict",
        Error::Git { .. } => "git failure",
        Error::InvalidArgument(_) => "invalid arguments",
        _ => "error",
    };
    let mut out = format!("{family}: {kind}\n{err}");
    if let Error::Git { log, .. } = err {
        if !log.is_empty() {
            out.push_str("\ncommands:\n");
            out.push_str(&log.join("\n"));
        }
    }
    out
}
