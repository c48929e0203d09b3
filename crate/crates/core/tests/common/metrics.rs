//! Synthetic evaluation records and brute-force scorers.

use sleuth_core::harness::{EvalRecord, Level};
use sleuth_core::localize::{LocationEntry, RankedLocations, Stage};

use super::SplitMix;

const FILES: &[&str] = &["a.py", "b.py", "pkg/c.py", "pkg/d.py", "e.py"];
const NAMES: &[&str] = &["f", "g", "K.m", "K.n"];

pub fn random_record(rng: &mut SplitMix, id: usize) -> EvalRecord {
    let mut entries = Vec::new();
    for _ in 0..rng.below(9) {
        let path = FILES[rng.below(FILES.len())].to_string();
        let name = rng.chance(70).then(|| NAMES[rng.below(NAMES.len())].to_string());
        if entries.iter().any(|e: &LocationEntry| e.path == path && e.name == name) {
            continue;
        }
        entries.push(LocationEntry {
            path,
            name,
            start_line: 1,
            end_line: 2,
            rationale: String::new(),
            stage: Stage::Stage2,
        });
    }
    let mut gold_files: Vec<String> = Vec::new();
    for _ in 0..rng.below(3) {
        let f = FILES[rng.below(FILES.len())].to_string();
        if !gold_files.contains(&f) {
            gold_files.push(f);
        }
    }
    let mut gold_functions: Vec<String> = Vec::new();
    for f in &gold_files {
        if rng.chance(60) {
            gold_functions.push(format!("{f}::{}", NAMES[rng.below(NAMES.len())]));
        }
    }
    let resolved = match rng.below(5) {
        0 => None,
        1 | 2 => Some(true),
        _ => Some(false),
    };
    EvalRecord {
        instance_id: format!("syn-{id}"),
        gold_files,
        gold_functions,
        predicted: RankedLocations(entries),
        resolved,
        ..EvalRecord::default()
    }
}

/// Accuracy by exhaustive membership checks over hand-built top-k lists.
pub fn brute_acc(records: &[EvalRecord], k: usize, level: Level, filter: bool) -> Option<f64> {
    let mut hits = 0;
    let mut n = 0;
    for r in records {
        let gold = match level {
            Level::File => &r.gold_files,
            Level::Function => &r.gold_functions,
        };
        let skip = match level {
            Level::File => gold.is_empty(),
            Level::Function => filter && gold.is_empty(),
        };
        if skip {
            continue;
        }
        // top-k of the distinct predictions at this level, in order
        let mut top: Vec<String> = Vec::new();
        for e in &r.predicted.0 {
            let key = match (level, &e.name) {
                (Level::File, _) => e.path.clone(),
                (Level::Function, Some(name)) => format!("{}::{}", e.path, name),
                (Level::Function, None) => continue,
            };
            if top.len() < k && !top.contains(&key) {
                top.push(key);
            }
        }
        n += 1;
        let mut all = true;
        for g in gold {
            let mut found = false;
            for t in &top {
                if t == g {
                    found = true;
                }
            }
            all &= found;
        }
        if all {
            hits += 1;
        }
    }
    (n > 0).then(|| hits as f64 / n as f64)
}

pub fn brute_rate(records: &[EvalRecord]) -> f64 {
    let mut resolved = 0.0;
    for r in records {
        if let Some(true) = r.resolved {
            resolved += 1.0;
        }
    }
    resolved / records.len() as f64
}
