//! Definition-level repository index.
//!
//! Every registered source file is segmented into function and class units
//! plus residual chunks (at most `chunk_lines` lines each) covering whatever
//! lies outside top-level definitions. Each unit carries its own adjacency
//! list of child-unit ids labeled `contains` (lexical nesting) or `invokes`
//! (resolved call reference).

mod adjacency;
mod python;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::IndexConfig;
use crate::error::{Error, Result};

pub use adjacency::build_adjacency;

pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Function,
    Class,
    Chunk,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Function => "function",
            UnitKind::Class => "class",
            UnitKind::Chunk => "chunk",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub path: String,
    pub start_line: usize,
    pub end_line: usize,
}

impl Location {
    pub fn line_count(&self) -> usize {
        self.end_line + 1 - self.start_line
    }

    pub fn contains(&self, other: &Location) -> bool {
        self.path == other.path && self.start_line <= other.start_line && other.end_line <= self.end_line
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Contains,
    Invokes,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Contains => "contains",
            EdgeKind::Invokes => "invokes",
        }
    }
}

/// One entry of a unit's adjacency list. `line` is where the child shows up
/// in the parent: the nested definition's header line or the first call site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChildRef {
    pub id: String,
    pub edge: EdgeKind,
    pub line: usize,
}

/// A call expression found in a definition's own body (nested definitions
/// excluded). Only kept in memory; adjacency is what gets persisted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallSite {
    pub name: String,
    pub line: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub id: String,
    pub kind: UnitKind,
    /// Dotted definition name; `None` for chunks.
    pub name: Option<String>,
    pub location: Location,
    pub text: String,
    pub children: Vec<ChildRef>,
    /// Header line(s) of the definition, empty for chunks.
    pub signature: String,
    pub signature_line: usize,
    #[serde(skip)]
    pub calls: Vec<CallSite>,
}

impl CodeUnit {
    pub fn is_definition(&self) -> bool {
        self.kind != UnitKind::Chunk
    }

    /// Last segment of the dotted name.
    pub fn short_name(&self) -> Option<&str> {
        self.name.as_deref().map(|n| n.rsplit('.').next().unwrap_or(n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub grammar: String,
    pub line_count: usize,
    /// Unit ids ordered by start line, enclosing units before nested ones.
    pub units: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonEntry {
    pub name: String,
    pub kind: UnitKind,
    pub signature: String,
    pub start_line: usize,
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSkeleton {
    pub path: String,
    pub entries: Vec<SkeletonEntry>,
}

impl FileSkeleton {
    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.path);
        if self.entries.is_empty() {
            out.push_str("  (no definitions)\n");
        }
        for e in &self.entries {
            let depth = e.name.matches('.').count();
            let first = e.signature.lines().next().unwrap_or("").trim();
            out.push_str(&format!(
                "  {}{} [{}-{}]\n",
                "  ".repeat(depth),
                first,
                e.start_line,
                e.end_line
            ));
        }
        out
    }
}

/// An immutable, shareable repository index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeIndex {
    pub root: String,
    pub languages: BTreeMap<String, String>,
    units: BTreeMap<String, CodeUnit>,
    files: BTreeMap<String, FileEntry>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize, Deserialize)]
struct IndexDocument {
    version: u32,
    root: String,
    #[serde(default)]
    languages: BTreeMap<String, String>,
    #[serde(default)]
    files: Vec<FileEntry>,
    units: Vec<CodeUnit>,
    diagnostics: Vec<Diagnostic>,
}

impl CodeIndex {
    fn from_parts(
        root: String,
        languages: BTreeMap<String, String>,
        units: Vec<CodeUnit>,
        files: Vec<FileEntry>,
        diagnostics: Vec<Diagnostic>,
    ) -> Self {
        Self {
            root,
            languages,
            units: units.into_iter().map(|u| (u.id.clone(), u)).collect(),
            files: files.into_iter().map(|f| (f.path.clone(), f)).collect(),
            diagnostics,
        }
    }

    pub fn get_unit(&self, id: &str) -> Result<&CodeUnit> {
        self.units
            .get(id)
            .ok_or_else(|| Error::not_found(format!("unit `{id}`")))
    }

    pub fn units(&self) -> impl Iterator<Item = &CodeUnit> {
        self.files
            .values()
            .flat_map(move |f| f.units.iter().map(move |id| &self.units[id]))
    }

    pub fn definitions(&self) -> impl Iterator<Item = &CodeUnit> {
        self.units().filter(|u| u.is_definition())
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn files(&self) -> impl Iterator<Item = &FileEntry> {
        self.files.values()
    }

    pub fn file(&self, path: &str) -> Option<&FileEntry> {
        self.files.get(path)
    }

    pub fn file_units(&self, path: &str) -> impl Iterator<Item = &CodeUnit> {
        self.files
            .get(path)
            .into_iter()
            .flat_map(move |f| f.units.iter().map(move |id| &self.units[id]))
    }

    pub fn file_skeleton(&self, path: &str) -> Result<FileSkeleton> {
        let path = normalize_rel(path);
        if !self.files.contains_key(&path) {
            return Err(Error::not_found(format!("file `{path}` is not in the index")));
        }
        let entries = self
            .file_units(&path)
            .filter(|u| u.is_definition())
            .map(|u| SkeletonEntry {
                name: u.name.clone().unwrap_or_default(),
                kind: u.kind,
                signature: u.signature.clone(),
                start_line: u.location.start_line,
                end_line: u.location.end_line,
            })
            .collect();
        Ok(FileSkeleton { path, entries })
    }

    /// Full text of an indexed file, reassembled from its units.
    pub fn file_text(&self, path: &str) -> Option<String> {
        let entry = self.files.get(path)?;
        let mut lines: Vec<&str> = vec![""; entry.line_count];
        for unit in self.file_units(path) {
            for (i, l) in unit.text.split('\n').enumerate() {
                lines[unit.location.start_line - 1 + i] = l;
            }
        }
        Some(lines.join("\n"))
    }

    pub fn to_json(&self) -> String {
        let doc = IndexDocument {
            version: INDEX_VERSION,
            root: self.root.clone(),
            languages: self.languages.clone(),
            files: self.files.values().cloned().collect(),
            units: self.units().cloned().collect(),
            diagnostics: self.diagnostics.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("index serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: IndexDocument = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: PathBuf::from("<index>"),
            message: e.to_string(),
        })?;
        if doc.version != INDEX_VERSION {
            return Err(Error::Schema {
                path: PathBuf::from("<index>"),
                message: format!("unsupported index version {}", doc.version),
            });
        }
        Ok(Self::from_parts(
            doc.root,
            doc.languages,
            doc.units,
            doc.files,
            doc.diagnostics,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema { message, .. } => Error::Schema {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

/// Extracts function and class units from one file. Nested definitions get
/// their own unit plus a `contains` edge from the enclosing unit.
pub fn extract_definitions(path: &str, source: &str, grammar: &str) -> Result<Vec<CodeUnit>> {
    match grammar {
        "python" => python::extract(path, source),
        other => Err(Error::UnsupportedLanguage(other.to_string())),
    }
}

/// Source lines without terminators. A trailing newline does not start a new line.
pub(crate) fn split_lines(source: &str) -> Vec<&str> {
    if source.is_empty() {
        return Vec::new();
    }
    let body = source.strip_suffix('\n').unwrap_or(source);
    body.split('\n').collect()
}

pub(crate) fn normalize_rel(path: &str) -> String {
    let p = path.replace('\\', "/");
    let p = p.trim_start_matches("./");
    p.trim_end_matches('/').to_string()
}

/// Residual chunks for lines not covered by any of `spans` (1-based, inclusive).
fn residual_chunks(path: &str, lines: &[&str], spans: &[(usize, usize)], chunk_lines: usize) -> Vec<CodeUnit> {
    let mut covered = vec![false; lines.len() + 1];
    for &(s, e) in spans {
        for c in covered.iter_mut().take(e + 1).skip(s) {
            *c = true;
        }
    }
    let mut chunks = Vec::new();
    let mut line = 1;
    while line <= lines.len() {
        if covered[line] {
            line += 1;
            continue;
        }
        let start = line;
        while line <= lines.len() && !covered[line] && line - start < chunk_lines {
            line += 1;
        }
        let end = line - 1;
        let n = chunks.len() + 1;
        chunks.push(CodeUnit {
            id: format!("{path}:chunk_{n}"),
            kind: UnitKind::Chunk,
            name: None,
            location: Location {
                path: path.to_string(),
                start_line: start,
                end_line: end,
            },
            text: lines[start - 1..end].join("\n"),
            children: Vec::new(),
            signature: String::new(),
            signature_line: start,
            calls: Vec::new(),
        });
    }
    chunks
}

struct FileResult {
    entry: FileEntry,
    units: Vec<CodeUnit>,
    diagnostic: Option<Diagnostic>,
}

fn index_file(rel: &str, abs: &Path, grammar: &str, chunk_lines: usize) -> Result<FileResult> {
    let bytes = std::fs::read(abs).map_err(|e| Error::io(abs, e))?;
    let (source, mut diagnostic) = match String::from_utf8(bytes) {
        Ok(s) => (s, None),
        Err(e) => (
            String::from_utf8_lossy(e.as_bytes()).into_owned(),
            Some(Diagnostic {
                path: rel.to_string(),
                message: "file is not valid UTF-8; indexed as chunks only".into(),
            }),
        ),
    };
    let lines = split_lines(&source);
    let mut defs = if diagnostic.is_none() {
        match extract_definitions(rel, &source, grammar) {
            Ok(d) => d,
            Err(e) => {
                diagnostic = Some(Diagnostic {
                    path: rel.to_string(),
                    message: format!("{e}; indexed as chunks only"),
                });
                Vec::new()
            }
        }
    } else {
        Vec::new()
    };
    let spans: Vec<(usize, usize)> = defs
        .iter()
        .map(|u| (u.location.start_line, u.location.end_line))
        .collect();
    defs.extend(residual_chunks(rel, &lines, &spans, chunk_lines));
    defs.sort_by(|a, b| {
        (a.location.start_line, std::cmp::Reverse(a.location.end_line), &a.id).cmp(&(
            b.location.start_line,
            std::cmp::Reverse(b.location.end_line),
            &b.id,
        ))
    });
    Ok(FileResult {
        entry: FileEntry {
            path: rel.to_string(),
            grammar: grammar.to_string(),
            line_count: lines.len(),
            units: defs.iter().map(|u| u.id.clone()).collect(),
        },
        units: defs,
        diagnostic,
    })
}

fn build_globset(patterns: &[String]) -> Result<GlobSet> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        b.add(Glob::new(p).map_err(|e| Error::Config(format!("ignore pattern `{p}`: {e}")))?);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

/// Indexes every registered source file under `root` and resolves adjacency.
/// Files are parsed in parallel; assembly is ordered by path so the result is
/// identical to a sequential build.
pub fn index_repository(root: &Path, config: &IndexConfig) -> Result<CodeIndex> {
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    let ignore = build_globset(&config.ignore)?;
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(false).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root")
            .to_string_lossy()
            .replace('\\', "/");
        if ignore.is_match(&rel) {
            continue;
        }
        let Some(ext) = entry.path().extension().and_then(|e| e.to_str()) else {
            continue;
        };
        if let Some(grammar) = config.languages.get(ext) {
            files.push((rel, entry.path().to_path_buf(), grammar.clone()));
        }
    }

    let mut results: Vec<FileResult> = files
        .par_iter()
        .map(|(rel, abs, grammar)| index_file(rel, abs, grammar, config.chunk_lines))
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| a.entry.path.cmp(&b.entry.path));

    let mut units = Vec::new();
    let mut entries = Vec::new();
    let mut diagnostics = Vec::new();
    for r in results {
        units.extend(r.units);
        entries.push(r.entry);
        diagnostics.extend(r.diagnostic);
    }
    let root_str = std::fs::canonicalize(root)
        .unwrap_or_else(|_| root.to_path_buf())
        .to_string_lossy()
        .into_owned();
    let index = CodeIndex::from_parts(root_str, config.languages.clone(), units, entries, diagnostics);
    Ok(build_adjacency(index))
}

impl CodeIndex {
    pub(crate) fn units_mut(&mut self) -> &mut BTreeMap<String, CodeUnit> {
        &mut self.units
    }
}
