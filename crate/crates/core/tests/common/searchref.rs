//! Exhaustive-scan and grep oracles for the search tools, built from the
//! Python `ast` view of a fixture and the reference similarity metric.

use std::collections::BTreeSet;
use std::path::Path;

use sleuth_core::config::{EngineConfig, SearchConfig};
use sleuth_core::search::{MatchMode, SearchHit, SearchTools};
use sleuth_core::{index_repository, CodeIndex};

use super::refsim;

/// Small deterministic generator so query corpora are reproducible.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

#[derive(Debug, Clone)]
pub struct Def {
    pub id: String,
    pub path: String,
    pub name: String,
    pub short: String,
    pub start: usize,
    pub end: usize,
}

pub fn load(name: &str) -> (CodeIndex, Vec<Def>) {
    let root = super::fixture_repo(name);
    let index = index_repository(&root, &EngineConfig::default().index).unwrap();
    (index, defs_of(&root))
}

pub fn defs_of(root: &Path) -> Vec<Def> {
    let oracle = super::ast_oracle(root);
    oracle["definitions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| Def {
            id: d["id"].as_str().unwrap().into(),
            path: d["path"].as_str().unwrap().into(),
            name: d["name"].as_str().unwrap().into(),
            short: d["short"].as_str().unwrap().into(),
            start: d["start"].as_u64().unwrap() as usize,
            end: d["end"].as_u64().unwrap() as usize,
        })
        .collect()
}

pub fn tools(index: &CodeIndex) -> SearchTools<'_> {
    SearchTools::new(index, &SearchConfig::default()).unwrap()
}

pub fn ids(hits: &[SearchHit]) -> Vec<String> {
    hits.iter().map(|h| h.id.clone()).collect()
}

/// Oracle ordering: score desc (to 1e-9), then path, start line, id.
pub fn oracle_rank(mut scored: Vec<(f64, &Def)>, cap: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| {
        let (qa, qb) = ((a.0 * 1e9).round() as i64, (b.0 * 1e9).round() as i64);
        qb.cmp(&qa)
            .then(a.1.path.cmp(&b.1.path))
            .then(a.1.start.cmp(&b.1.start))
            .then(a.1.id.cmp(&b.1.id))
    });
    scored.into_iter().take(cap).map(|(s, d)| (d.id.clone(), s)).collect()
}

/// Exhaustive three-stage oracle for definition search.
pub fn oracle_find_def(defs: &[Def], query: &str) -> (MatchMode, Vec<(String, f64)>) {
    let exact: Vec<_> = defs
        .iter()
        .filter(|d| d.name == query || d.short == query)
        .map(|d| (1.0, d))
        .collect();
    if !exact.is_empty() {
        return (MatchMode::Exact, oracle_rank(exact, 10));
    }
    if let Ok(re) = regex::Regex::new(&format!("^(?:{query})$")) {
        let hits: Vec<_> = defs
            .iter()
            .filter(|d| re.is_match(&d.name) || re.is_match(&d.short))
            .map(|d| (refsim::name_score(query, &d.name), d))
            .collect();
        if !hits.is_empty() {
            return (MatchMode::Regex, oracle_rank(hits, 10));
        }
    }
    let all = defs.iter().map(|d| (refsim::name_score(query, &d.name), d)).collect();
    (MatchMode::Fuzzy, oracle_rank(all, 10))
}

pub fn assert_matches_oracle(tools: &SearchTools, defs: &[Def], query: &str) {
    let got = tools.find_code_def(query, None).unwrap();
    let (mode, want) = oracle_find_def(defs, query);
    assert_eq!(
        ids(&got.hits),
        want.iter().map(|w| w.0.clone()).collect::<Vec<_>>(),
        "query {query:?}"
    );
    for (h, (_, s)) in got.hits.iter().zip(&want) {
        assert_eq!(h.mode, mode, "query {query:?}");
        assert!((h.score - s).abs() < 1e-9, "query {query:?}: {} vs {s}", h.score);
    }
}

/// Mutations of real names: exact names, prefixes, transpositions, regexes,
/// case changes, and noise, exercising all three stages.
pub fn random_query(rng: &mut Lcg, defs: &[Def]) -> String {
    let d = &defs[rng.below(defs.len())];
    let base: Vec<char> = d.short.chars().collect();
    match rng.below(7) {
        0 => d.short.clone(),
        1 => d.name.clone(),
        2 if base.len() > 2 => {
            let i = rng.below(base.len() - 1);
            let mut b = base.clone();
            b.swap(i, i + 1);
            b.into_iter().collect()
        }
        3 => format!(
            "{}.*",
            base[..base.len().min(1 + rng.below(4))].iter().collect::<String>()
        ),
        4 => d.short.to_uppercase(),
        5 => {
            let mut b = base.clone();
            let i = rng.below(b.len());
            b[i] = (b'a' + rng.below(26) as u8) as char;
            b.into_iter().collect()
        }
        _ => (0..1 + rng.below(8))
            .map(|_| (b'a' + rng.below(26) as u8) as char)
            .collect(),
    }
}

/// Independent word splitter: underscores, lower->Upper, digit->Upper, and
/// the last capital of an acronym run that starts a new word.
pub fn oracle_words(ident: &str) -> Vec<String> {
    let mut spaced = String::new();
    let c: Vec<char> = ident.chars().collect();
    for i in 0..c.len() {
        let boundary = i > 0
            && c[i].is_ascii_uppercase()
            && (c[i - 1].is_ascii_lowercase()
                || c[i - 1].is_ascii_digit()
                || (c[i - 1].is_ascii_uppercase() && c.get(i + 1).is_some_and(|n| n.is_ascii_lowercase())));
        if boundary {
            spaced.push(' ');
        }
        spaced.push(if c[i] == '_' { ' ' } else { c[i].to_ascii_lowercase() });
    }
    spaced.split_whitespace().map(String::from).collect()
}

/// Smallest oracle definition holding `line`, if any.
pub fn containing_def<'d>(defs: &'d [Def], path: &str, line: usize) -> Option<&'d Def> {
    defs.iter()
        .filter(|d| d.path == path && d.start <= line && line <= d.end)
        .min_by_key(|d| (d.end - d.start, d.start))
}

/// Grep oracle: (containing unit id or chunk marker, line) for each matching line.
pub fn grep_oracle(root: &Path, defs: &[Def], pred: impl Fn(&str) -> bool) -> BTreeSet<(String, usize)> {
    let mut out = BTreeSet::new();
    let files = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "py"))
        .map(|e| {
            e.path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/")
        });
    for path in files {
        let text = std::fs::read_to_string(root.join(&path)).unwrap();
        for (i, line) in text.lines().enumerate() {
            if pred(line) {
                let owner = containing_def(defs, &path, i + 1).map_or(format!("{path}:<chunk>"), |d| d.id.clone());
                out.insert((owner, i + 1));
            }
        }
    }
    out
}
