//! Tool-call surface of the search tools: JSON argument decoding, schemas
//! published to the client, and text rendering of responses.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{FileMatch, SearchHit, SearchResults, SearchTools};

pub const FIND_FILE: &str = "find_file";
pub const FIND_CODE_DEF: &str = "find_code_def";
pub const FIND_CODE_CONTENT: &str = "find_code_content";
pub const FIND_CHILD_UNIT: &str = "find_child_unit";
pub const FINISH_SEARCH: &str = "finish_search";

/// A unit returned by a tool, with the child ids the agent may descend into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnedUnit {
    pub id: String,
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub text: String,
    /// False when the tool ran but reported an error (not found, bad query).
    pub ok: bool,
    pub finished: bool,
    pub units: Vec<ReturnedUnit>,
    pub preview_lines: usize,
}

/// The call could not be executed at all: unknown tool or bad arguments.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed tool call: {0}")]
pub struct ToolInvocationError(pub String);

fn string_arg<'v>(args: &'v Value, key: &str, required: bool) -> Result<Option<&'v str>, ToolInvocationError> {
    match args.get(key) {
        None | Some(Value::Null) if !required => Ok(None),
        None | Some(Value::Null) => Err(ToolInvocationError(format!("missing required argument `{key}`"))),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(ToolInvocationError(format!(
            "argument `{key}` must be a string, got {other}"
        ))),
    }
}

fn line_arg(args: &Value, key: &str) -> Result<Option<usize>, ToolInvocationError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n
            .as_u64()
            .map(|v| Some(v as usize))
            .ok_or_else(|| ToolInvocationError(format!("argument `{key}` must be a positive integer"))),
        Some(Value::String(s)) => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| ToolInvocationError(format!("argument `{key}` must be a positive integer"))),
        Some(other) => Err(ToolInvocationError(format!(
            "argument `{key}` must be an integer, got {other}"
        ))),
    }
}

fn check_known(args: &Value, allowed: &[&str]) -> Result<(), ToolInvocationError> {
    match args {
        Value::Object(map) => {
            for k in map.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(ToolInvocationError(format!(
                        "unknown argument `{k}` (expected: {})",
                        allowed.join(", ")
                    )));
                }
            }
            Ok(())
        }
        Value::Null => Ok(()),
        _ => Err(ToolInvocationError("arguments must be a JSON object".into())),
    }
}

/// Function-calling schemas for the five search tools.
pub fn tool_schemas() -> Vec<Value> {
    let s = |d: &str| json!({"type": "string", "description": d});
    let i = |d: &str| json!({"type": "integer", "description": d});
    vec![
        json!({
            "name": FIND_FILE,
            "description": "Search files by exact file name or glob pattern, optionally within a directory. Returns paths with a skeleton of class/function signatures.",
            "parameters": {"type": "object", "properties": {
                "file_name": s("Exact file name or glob pattern"),
                "dir_path": s("Directory to restrict the search to")},
                "required": ["file_name"]}
        }),
        json!({
            "name": FIND_CODE_DEF,
            "description": "Search class/function definitions by exact name, falling back to regex and then fuzzy ranking. Returns location, child-unit ids and a preview.",
            "parameters": {"type": "object", "properties": {
                "definition_name": s("Definition name, regex, or approximate name"),
                "file_path": s("File to restrict the search to")},
                "required": ["definition_name"]}
        }),
        json!({
            "name": FIND_CODE_CONTENT,
            "description": "Search a variable name (any case convention) or an exact code snippet. Each match is attached to its containing code unit.",
            "parameters": {"type": "object", "properties": {
                "content": s("Identifier or code snippet"),
                "file_path": s("File to restrict the search to"),
                "start_line": i("First line of the span (requires file_path)"),
                "end_line": i("Last line of the span (requires file_path)")},
                "required": ["content"]}
        }),
        json!({
            "name": FIND_CHILD_UNIT,
            "description": "Open a child unit by name and file path (from a child-unit identifier `file_path:definition_name`).",
            "parameters": {"type": "object", "properties": {
                "definition_name": s("Definition name, e.g. `A.m`"),
                "file_path": s("Repository-relative file path")},
                "required": ["definition_name", "file_path"]}
        }),
        json!({
            "name": FINISH_SEARCH,
            "description": "Signal that the search is complete and move on to filtering and ranking.",
            "parameters": {"type": "object", "properties": {}, "required": []}
        }),
    ]
}

impl SearchTools<'_> {
    /// Executes one tool call. Tool-level failures (not found, invalid
    /// query) come back as an `ok == false` output for the agent to read.
    pub fn invoke(&self, name: &str, args: &Value) -> Result<ToolOutput, ToolInvocationError> {
        let result = match name {
            FIND_FILE => {
                check_known(args, &["file_name", "dir_path"])?;
                let q = string_arg(args, "file_name", true)?.unwrap_or_default();
                let dir = string_arg(args, "dir_path", false)?;
                self.find_file(q, dir).map(|files| render_files(q, &files))
            }
            FIND_CODE_DEF => {
                check_known(args, &["definition_name", "file_path"])?;
                let q = string_arg(args, "definition_name", true)?.unwrap_or_default();
                let file = string_arg(args, "file_path", false)?;
                self.find_code_def(q, file).map(|r| render_results(&format!("definition(s) for `{q}`"), &r))
            }
            FIND_CODE_CONTENT => {
                check_known(args, &["content", "file_path", "start_line", "end_line"])?;
                let q = string_arg(args, "content", true)?.unwrap_or_default();
                let file = string_arg(args, "file_path", false)?;
                let s = line_arg(args, "start_line")?;
                let e = line_arg(args, "end_line")?;
                self.find_code_content(q, file, s, e)
                    .map(|r| render_results(&format!("match(es) for `{}`", q.trim()), &r))
            }
            FIND_CHILD_UNIT => {
                check_known(args, &["definition_name", "file_path"])?;
                let n = string_arg(args, "definition_name", true)?.unwrap_or_default();
                let f = string_arg(args, "file_path", true)?.unwrap_or_default();
                self.find_child_unit(n, f).map(|h| {
                    render_results(
                        "unit",
                        &SearchResults {
                            hits: vec![h],
                            notes: Vec::new(),
                        },
                    )
                })
            }
            FINISH_SEARCH => {
                check_known(args, &[])?;
                self.finish_search();
                Ok(ToolOutput {
                    text: "Search finished.".into(),
                    ok: true,
                    finished: true,
                    units: Vec::new(),
                    preview_lines: 0,
                })
            }
            other => {
                return Err(ToolInvocationError(format!(
                    "unknown tool `{other}`; available: {FIND_FILE}, {FIND_CODE_DEF}, {FIND_CODE_CONTENT}, {FIND_CHILD_UNIT}, {FINISH_SEARCH}"
                )))
            }
        };
        Ok(result.unwrap_or_else(|e| ToolOutput {
            text: format!("Error: {e}"),
            ok: false,
            finished: false,
            units: Vec::new(),
            preview_lines: 0,
        }))
    }
}

fn render_files(query: &str, files: &[FileMatch]) -> ToolOutput {
    let mut text = if files.is_empty() {
        format!("No files match `{query}`.\n")
    } else {
        format!("Found {} file(s) matching `{query}`:\n", files.len())
    };
    for f in files {
        text.push_str(&f.skeleton.render());
    }
    ToolOutput {
        text,
        ok: true,
        finished: false,
        units: Vec::new(),
        preview_lines: 0,
    }
}

fn render_hit(i: usize, h: &SearchHit, out: &mut String) {
    out.push_str(&format!(
        "[{}] {} ({}) lines {}-{} score={:.3} match={}\n",
        i + 1,
        h.id,
        h.kind.as_str(),
        h.location.start_line,
        h.location.end_line,
        h.score,
        h.mode.as_str()
    ));
    if !h.children.is_empty() {
        let kids: Vec<String> = h
            .children
            .iter()
            .map(|c| format!("{} ({})", c.id, c.edge.as_str()))
            .collect();
        out.push_str(&format!("    children: {}\n", kids.join(", ")));
    }
    h.preview.render(out, "    ");
}

fn render_results(what: &str, r: &SearchResults) -> ToolOutput {
    let mut text = String::new();
    for n in &r.notes {
        text.push_str(&format!("Note: {n}\n"));
    }
    if r.hits.is_empty() {
        text.push_str(&format!("No {what} found.\n"));
    } else {
        text.push_str(&format!("Found {} {what}:\n", r.hits.len()));
    }
    for (i, h) in r.hits.iter().enumerate() {
        render_hit(i, h, &mut text);
    }
    ToolOutput {
        text,
        ok: true,
        finished: false,
        units: r
            .hits
            .iter()
            .map(|h| ReturnedUnit {
                id: h.id.clone(),
                children: h.children.iter().map(|c| c.id.clone()).collect(),
            })
            .collect(),
        preview_lines: r.hits.iter().map(|h| h.preview.line_count()).sum(),
    }
}
