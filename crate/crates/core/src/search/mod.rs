//! The localization search tools: `find_file`, `find_code_def`,
//! `find_code_content`, `find_child_unit` and `finish_search`.
//!
//! Tools are pure reads over an immutable [`CodeIndex`]. They return location
//! metadata, child-unit ids and budgeted previews instead of full source.

pub mod case;
pub mod fuzzy;
pub mod preview;
pub mod tool;

use std::cmp::Ordering;

use globset::Glob;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::error::{Error, Result};
use crate::index::{normalize_rel, ChildRef, CodeIndex, CodeUnit, FileSkeleton, Location, UnitKind};

pub use fuzzy::{fuzzy_score, FuzzyParams};
pub use preview::CodePreview;
pub use tool::{tool_schemas, ToolInvocationError, ToolOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Regex,
    Fuzzy,
    Content,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Exact => "exact",
            MatchMode::Regex => "regex",
            MatchMode::Fuzzy => "fuzzy",
            MatchMode::Content => "content",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub kind: UnitKind,
    pub name: Option<String>,
    pub location: Location,
    pub mode: MatchMode,
    pub score: f64,
    pub preview: CodePreview,
    pub children: Vec<ChildRef>,
}

/// Ranked hits plus notes about how the query was handled (e.g. a regex that
/// failed to compile and fell through to fuzzy ranking).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchResults {
    pub hits: Vec<SearchHit>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileMatch {
    pub path: String,
    pub skeleton: FileSkeleton,
}

/// Sentinel returned by `finish_search`; the localization loop ends its
/// search phase when it sees one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchFinished;

/// Scores closer than this rank as ties, so rounding noise between
/// equivalent float evaluations never decides an ordering.
const SCORE_RESOLUTION: f64 = 1e9;

fn score_key(s: f64) -> i64 {
    (s * SCORE_RESOLUTION).round() as i64
}

/// Score descending (at 1e-9 resolution), then path, start line and id ascending.
pub fn rank_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    score_key(b.score)
        .cmp(&score_key(a.score))
        .then_with(|| a.location.path.cmp(&b.location.path))
        .then_with(|| a.location.start_line.cmp(&b.location.start_line))
        .then_with(|| a.id.cmp(&b.id))
}

pub struct SearchTools<'a> {
    index: &'a CodeIndex,
    config: SearchConfig,
    params: FuzzyParams,
}

impl<'a> SearchTools<'a> {
    pub fn new(index: &'a CodeIndex, config: &SearchConfig) -> Result<Self> {
        let params = FuzzyParams::from(config);
        params.validate()?;
        Ok(Self {
            index,
            config: config.clone(),
            params,
        })
    }

    pub fn index(&self) -> &CodeIndex {
        self.index
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    fn check_file(&self, path: &str) -> Result<String> {
        let path = normalize_rel(path);
        if self.index.file(&path).is_some() {
            return Ok(path);
        }
        let mut scored: Vec<(f64, &str)> = self
            .index
            .files()
            .map(|f| {
                let s = fuzzy_score(&path, &f.path, &self.params).unwrap_or(0.0);
                (s, f.path.as_str())
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(b.1)));
        Err(Error::NotFound {
            what: format!("file `{path}`"),
            suggestions: scored.into_iter().take(3).map(|(_, p)| p.to_string()).collect(),
        })
    }

    /// Builds a hit with a preview of `unit`. `extra` lines are shown in
    /// addition to the signature; definitions default to invocation context.
    fn hit(&self, unit: &CodeUnit, mode: MatchMode, score: f64, extra: Option<&[usize]>) -> SearchHit {
        let preview = if self.config.full_code {
            preview::full(unit)
        } else {
            let lines = match extra {
                Some(l) => l.to_vec(),
                None => preview::invocation_lines(unit),
            };
            preview::build(unit, &lines, self.config.hit_line_budget)
        };
        SearchHit {
            id: unit.id.clone(),
            kind: unit.kind,
            name: unit.name.clone(),
            location: unit.location.clone(),
            mode,
            score,
            preview,
            children: unit.children.clone(),
        }
    }

    /// Sorts, caps, and re-budgets previews so the whole response fits.
    fn finish(&self, mut hits: Vec<(SearchHit, Option<Vec<usize>>)>) -> Vec<SearchHit> {
        hits.sort_by(|a, b| rank_order(&a.0, &b.0));
        hits.truncate(self.config.result_cap);
        if self.config.full_code {
            return hits.into_iter().map(|(h, _)| h).collect();
        }
        let mut remaining = self.config.response_line_budget;
        hits.into_iter()
            .map(|(mut h, extra)| {
                if h.preview.line_count() > remaining {
                    let unit = self.index.get_unit(&h.id).expect("hit ids come from the index");
                    let lines = extra.unwrap_or_else(|| preview::invocation_lines(unit));
                    h.preview = preview::build(unit, &lines, remaining.min(self.config.hit_line_budget));
                }
                remaining -= h.preview.line_count();
                h
            })
            .collect()
    }

    /// Files whose basename equals `file_name` or whose repo-relative path
    /// matches it as a glob, optionally restricted to `dir_path`.
    pub fn find_file(&self, file_name: &str, dir_path: Option<&str>) -> Result<Vec<FileMatch>> {
        let file_name = file_name.trim();
        if file_name.is_empty() {
            return Err(Error::InvalidQuery("file_name must not be empty".into()));
        }
        let glob = Glob::new(file_name)
            .map_err(|e| Error::InvalidQuery(format!("malformed glob `{file_name}`: {e}")))?
            .compile_matcher();
        let dir = dir_path.map(normalize_rel).filter(|d| !d.is_empty() && d != ".");
        let mut out = Vec::new();
        for f in self.index.files() {
            if let Some(d) = &dir {
                if !f.path.starts_with(&format!("{d}/")) {
                    continue;
                }
            }
            let base = f.path.rsplit('/').next().unwrap_or(&f.path);
            if base == file_name || f.path == file_name || glob.is_match(&f.path) || glob.is_match(base) {
                out.push(FileMatch {
                    path: f.path.clone(),
                    skeleton: self.index.file_skeleton(&f.path)?,
                });
                if out.len() == self.config.result_cap {
                    break;
                }
            }
        }
        Ok(out)
    }

    fn definitions_in(&self, file_path: Option<&str>) -> Result<Vec<&'a CodeUnit>> {
        let index = self.index;
        Ok(match file_path {
            Some(p) => {
                let p = self.check_file(p)?;
                index.file_units(&p).filter(|u| u.is_definition()).collect()
            }
            None => index.definitions().collect(),
        })
    }

    /// Exact name match, else regex over names, else fuzzy ranking.
    pub fn find_code_def(&self, definition_name: &str, file_path: Option<&str>) -> Result<SearchResults> {
        let query = definition_name.trim();
        if query.is_empty() {
            return Err(Error::InvalidQuery("definition_name must not be empty".into()));
        }
        let defs = self.definitions_in(file_path)?;
        let mut notes = Vec::new();

        let exact: Vec<_> = defs
            .iter()
            .filter(|u| u.name.as_deref() == Some(query) || u.short_name() == Some(query))
            .map(|u| (self.hit(u, MatchMode::Exact, 1.0, None), None))
            .collect();
        if !exact.is_empty() {
            return Ok(SearchResults {
                hits: self.finish(exact),
                notes,
            });
        }

        match Regex::new(&format!("^(?:{query})$")) {
            Ok(re) => {
                let matched: Vec<_> = defs
                    .iter()
                    .filter(|u| {
                        u.name.as_deref().is_some_and(|n| re.is_match(n))
                            || u.short_name().is_some_and(|n| re.is_match(n))
                    })
                    .map(|u| (self.hit(u, MatchMode::Regex, self.name_score(query, u), None), None))
                    .collect();
                if !matched.is_empty() {
                    return Ok(SearchResults {
                        hits: self.finish(matched),
                        notes,
                    });
                }
            }
            Err(e) => notes.push(format!(
                "query is not a valid regular expression ({}); ranked by fuzzy similarity",
                e.to_string().lines().last().unwrap_or("parse error").trim()
            )),
        }

        let fuzzy: Vec<_> = defs
            .iter()
            .map(|u| (self.hit(u, MatchMode::Fuzzy, self.name_score(query, u), None), None))
            .collect();
        Ok(SearchResults {
            hits: self.finish(fuzzy),
            notes,
        })
    }

    /// Case-insensitive similarity of a query to a unit's dotted or short name.
    pub fn name_score(&self, query: &str, unit: &CodeUnit) -> f64 {
        let q = query.to_lowercase();
        [unit.name.as_deref(), unit.short_name()]
            .into_iter()
            .flatten()
            .map(|n| fuzzy_score(&q, &n.to_lowercase(), &self.params).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }

    /// Variable (any case convention) or literal snippet search, grouped by
    /// the smallest unit containing each match.
    pub fn find_code_content(
        &self,
        content: &str,
        file_path: Option<&str>,
        start_line: Option<usize>,
        end_line: Option<usize>,
    ) -> Result<SearchResults> {
        if content.trim().is_empty() {
            return Err(Error::InvalidQuery("content must not be empty".into()));
        }
        if file_path.is_none() && (start_line.is_some() || end_line.is_some()) {
            return Err(Error::InvalidQuery("a line span requires file_path".into()));
        }
        let files: Vec<String> = match file_path {
            Some(p) => vec![self.check_file(p)?],
            None => self.index.files().map(|f| f.path.clone()).collect(),
        };
        let span = match file_path {
            Some(_) if start_line.is_some() || end_line.is_some() => {
                let n = self.index.file(&files[0]).map_or(0, |f| f.line_count);
                let s = start_line.unwrap_or(1);
                let e = end_line.unwrap_or(n);
                if s == 0 || e > n || s > e {
                    return Err(Error::InvalidQuery(format!(
                        "span {s}-{e} is outside {} (1-{n})",
                        files[0]
                    )));
                }
                Some((s, e))
            }
            _ => None,
        };

        let ident_words = case::is_identifier(content.trim()).then(|| case::split_words(content.trim()));
        // (unit id, matched lines, best score)
        let mut grouped: Vec<(String, Vec<usize>, f64)> = Vec::new();
        for path in &files {
            let Some(text) = self.index.file_text(path) else {
                continue;
            };
            let lines: Vec<&str> = text.split('\n').collect();
            let mut matches: Vec<(usize, usize, f64)> = Vec::new();
            if let Some(words) = &ident_words {
                let q = content.trim();
                for (i, line) in lines.iter().enumerate() {
                    let mut best = line.contains(q).then_some(1.0);
                    if best.is_none()
                        && case::identifier_tokens(line)
                            .iter()
                            .any(|(_, t)| case::split_words(t) == *words)
                    {
                        best = Some(0.9);
                    }
                    if let Some(s) = best {
                        matches.push((i + 1, i + 1, s));
                    }
                }
            } else if content.contains('\n') {
                let needle = content.trim_end_matches('\n');
                let mut from = 0;
                while let Some(pos) = text[from..].find(needle) {
                    let at = from + pos;
                    let first = text[..at].matches('\n').count() + 1;
                    let last = first + needle.matches('\n').count();
                    matches.push((first, last, 1.0));
                    from = at + needle.len().max(1);
                }
            } else {
                for (i, line) in lines.iter().enumerate() {
                    if line.contains(content) {
                        matches.push((i + 1, i + 1, 1.0));
                    }
                }
            }

            for (first, last, score) in matches {
                if let Some((s, e)) = span {
                    if first < s || last > e {
                        continue;
                    }
                }
                let Some(unit) = self.smallest_containing(path, first, last) else {
                    continue;
                };
                match grouped.iter_mut().find(|g| g.0 == unit.id) {
                    Some(g) => {
                        g.1.extend(first..=last);
                        g.2 = g.2.max(score);
                    }
                    None => grouped.push((unit.id.clone(), (first..=last).collect(), score)),
                }
            }
        }

        let hits = grouped
            .into_iter()
            .map(|(id, lines, score)| {
                let unit = self.index.get_unit(&id).expect("grouped ids come from the index");
                let h = self.hit(unit, MatchMode::Content, score, Some(&lines));
                (h, Some(lines))
            })
            .collect();
        Ok(SearchResults {
            hits: self.finish(hits),
            notes: Vec::new(),
        })
    }

    /// Smallest unit whose span holds `first..=last`; definitions win ties.
    /// Falls back to the smallest unit holding `first`.
    fn smallest_containing(&self, path: &str, first: usize, last: usize) -> Option<&'a CodeUnit> {
        let index = self.index;
        let pick = |need_last: usize| {
            index
                .file_units(path)
                .filter(|u| u.location.start_line <= first && need_last <= u.location.end_line)
                .min_by_key(|u| (u.location.line_count(), !u.is_definition(), u.location.start_line))
        };
        pick(last).or_else(|| pick(first))
    }

    /// The depth-first descent step: exact lookup of `file_path:definition_name`.
    pub fn find_child_unit(&self, definition_name: &str, file_path: &str) -> Result<SearchHit> {
        let name = definition_name.trim();
        let path = normalize_rel(file_path.trim());
        if name.is_empty() || path.is_empty() {
            return Err(Error::InvalidQuery(
                "definition_name and file_path are both required".into(),
            ));
        }
        let id = format!("{path}:{name}");
        match self.index.get_unit(&id) {
            Ok(u) if u.is_definition() => {
                let h = self.hit(u, MatchMode::Exact, 1.0, None);
                Ok(self.finish(vec![(h, None)]).remove(0))
            }
            _ => Err(Error::NotFound {
                what: format!("definition `{id}`"),
                suggestions: self.suggest_ids(&id, 3),
            }),
        }
    }

    pub fn suggest_ids(&self, id: &str, n: usize) -> Vec<String> {
        let q = id.to_lowercase();
        let mut scored: Vec<(f64, &str)> = self
            .index
            .definitions()
            .map(|u| {
                (
                    fuzzy_score(&q, &u.id.to_lowercase(), &self.params).unwrap_or(0.0),
                    u.id.as_str(),
                )
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(b.1)));
        scored.into_iter().take(n).map(|(_, id)| id.to_string()).collect()
    }

    pub fn finish_search(&self) -> SearchFinished {
        SearchFinished
    }
}
