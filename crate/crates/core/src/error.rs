use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the engine. Tool-facing variants render to text that is
/// shown to the agent verbatim, so messages are written for that audience.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported language: {0}")]
    UnsupportedLanguage(String),

    #[error("not found: {what}{}", render_suggestions(.suggestions))]
    NotFound { what: String, suggestions: Vec<String> },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("parse error: {message}{}", .line.as_ref().map(|l| format!(" (line: `{l}`)")).unwrap_or_default())]
    Parse { message: String, line: Option<String> },

    #[error("conflict: {message}{}", .suggestion.as_ref().map(|s| format!(" (try `{s}`)")).unwrap_or_default())]
    Conflict {
        message: String,
        suggestion: Option<String>,
    },

    #[error("ambiguous: {what} matches {}", .candidates.join(", "))]
    Ambiguous { what: String, candidates: Vec<String> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("git command failed: {message}\n{}", .log.join("\n"))]
    Git { message: String, log: Vec<String> },

    #[error("merge conflict in: {}", .paths.join(", "))]
    MergeConflict { paths: Vec<String> },

    #[error("sandbox violation: {0}")]
    Sandbox(String),

    #[error("client error: {0}")]
    Client(String),

    #[error("transcript drift at turn {turn}: expected observation to match {expected:?}, got:\n{actual}")]
    TranscriptDrift {
        turn: usize,
        expected: String,
        actual: String,
    },

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error: {0}")]
    Config(String),
}

fn render_suggestions(suggestions: &[String]) -> String {
    if suggestions.is_empty() {
        String::new()
    } else {
        format!("; did you mean: {}", suggestions.join(", "))
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn not_found(what: impl Into<String>) -> Self {
        Error::NotFound {
            what: what.into(),
            suggestions: Vec::new(),
        }
    }

    pub(crate) fn parse(message: impl Into<String>, line: Option<&str>) -> Self {
        Error::Parse {
            message: message.into(),
            line: line.map(str::to_string),
        }
    }

    pub(crate) fn conflict(message: impl Into<String>) -> Self {
        Error::Conflict {
            message: message.into(),
            suggestion: None,
        }
    }
}
