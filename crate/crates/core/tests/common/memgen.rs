//! Random valid working-memory states.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use sleuth_core::memory::{ActionKind, Checkpoint, HypothesisRecord, Insight, Status, TodoRecord, WorkingMemoryState};

use super::SplitMix;

const ALPHABET: &[char] = &['a', 'Z', '0', ' ', '_', '"', '\\', '\n', 'é', '漢', '🙂', ':', '[', '-'];

fn text(rng: &mut SplitMix, max: usize) -> String {
    (0..1 + rng.below(max))
        .map(|_| ALPHABET[rng.below(ALPHABET.len())])
        .collect()
}

fn hash(rng: &mut SplitMix) -> String {
    format!(
        "{:016x}{:016x}{:08x}",
        rng.next_u64(),
        rng.next_u64(),
        rng.next_u64() as u32
    )
}

fn status(rng: &mut SplitMix) -> Status {
    [Status::Pending, Status::InProgress, Status::Successful, Status::Failed][rng.below(4)]
}

fn extra(rng: &mut SplitMix) -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    if rng.chance(20) {
        m.insert(
            format!("future_{}", rng.below(100)),
            json!({"n": rng.next_u64() % 1000, "f": rng.next_u64() as f64 / 7.0, "s": text(rng, 5)}),
        );
    }
    m
}

pub fn random_state(rng: &mut SplitMix) -> WorkingMemoryState {
    let mut m = WorkingMemoryState::default();
    if rng.chance(70) {
        m.original_state_hash = Some(hash(rng));
        m.base_hash = Some(hash(rng));
    }
    for i in 0..rng.below(5) {
        let st = status(rng);
        // full-precision confidence in [0.1, 1.0]
        let confidence = 0.1 + 0.9 * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let mut h = HypothesisRecord::new(format!("H{i}-{}", text(rng, 4)), text(rng, 30), st, confidence);
        if st != Status::Pending && rng.chance(60) {
            h.branch = Some(format!("h{i}"));
            h.origin_hash = Some(hash(rng));
        }
        for j in 0..rng.below(5) {
            let action = if rng.chance(50) {
                ActionKind::Edit
            } else {
                ActionKind::Test
            };
            let mut t = TodoRecord::new(format!("todo {j} {}", text(rng, 12)), action, status(rng));
            if rng.chance(40) {
                t.checkpoint = Some(Checkpoint {
                    hash: hash(rng),
                    message: text(rng, 20),
                });
            }
            t.extra = extra(rng);
            h.todos.push(t);
        }
        h.extra = extra(rng);
        m.hypotheses.push(h);
    }
    for _ in 0..rng.below(4) {
        let hypothesis = (!m.hypotheses.is_empty() && rng.chance(60))
            .then(|| m.hypotheses[rng.below(m.hypotheses.len())].name.clone());
        let timestamp = m.tick();
        m.insights.push(Insight {
            hypothesis,
            text: text(rng, 40),
            timestamp,
        });
    }
    if !m.hypotheses.is_empty() && rng.chance(50) {
        m.active = Some(m.hypotheses[rng.below(m.hypotheses.len())].name.clone());
    }
    if rng.chance(20) {
        m.merged_branch = Some("h0".into());
    }
    m.clock += rng.next_u64() % 50;
    m.stash_counter = rng.next_u64() % 5;
    m.compared = rng.chance(30);
    m.extra = extra(rng);
    m
}

/// Save, load and re-save; the loaded state must equal the original and
/// the second file must be byte-identical to the first.
pub fn round_trip(state: &WorkingMemoryState, dir: &std::path::Path) -> Result<(), String> {
    let path = dir.join("memory.json");
    state.save(&path).map_err(|e| e.to_string())?;
    let first = std::fs::read(&path).unwrap();
    let loaded = WorkingMemoryState::load(&path).map_err(|e| e.to_string())?;
    if &loaded != state {
        return Err(format!("loaded state differs:\n{state:#?}\nvs\n{loaded:#?}"));
    }
    loaded.save(&path).map_err(|e| e.to_string())?;
    if std::fs::read(&path).unwrap() != first {
        return Err("re-saved file is not byte-identical".into());
    }
    Ok(())
}
