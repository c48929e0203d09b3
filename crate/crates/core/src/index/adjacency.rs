use std::collections::{BTreeMap, HashSet};

use super::{ChildRef, CodeIndex, EdgeKind};

/// Maximum `invokes` edges produced for one ambiguous call name.
const MAX_AMBIGUOUS_TARGETS: usize = 3;

/// Resolves call sites to `invokes` edges by name: same-file definitions win,
/// otherwise every repo-wide definition with that name (capped). Self-edges
/// and unresolvable calls produce nothing. Children end up in source order.
pub fn build_adjacency(mut index: CodeIndex) -> CodeIndex {
    let mut by_name: BTreeMap<String, Vec<(String, usize, String)>> = BTreeMap::new();
    for unit in index.definitions() {
        if let Some(short) = unit.short_name() {
            by_name.entry(short.to_string()).or_default().push((
                unit.location.path.clone(),
                unit.location.start_line,
                unit.id.clone(),
            ));
        }
    }
    for targets in by_name.values_mut() {
        targets.sort();
    }

    for unit in index.units_mut().values_mut() {
        if !unit.is_definition() {
            continue;
        }
        let mut children: Vec<ChildRef> = unit
            .children
            .drain(..)
            .filter(|c| c.edge == EdgeKind::Contains)
            .collect();
        let mut seen: HashSet<String> = children.iter().map(|c| c.id.clone()).collect();
        let mut calls = unit.calls.clone();
        calls.sort_by_key(|c| c.offset);
        for call in &calls {
            let Some(candidates) = by_name.get(&call.name) else {
                continue;
            };
            let same_file: Vec<&(String, usize, String)> =
                candidates.iter().filter(|(p, _, _)| *p == unit.location.path).collect();
            let pool: Vec<&(String, usize, String)> = if same_file.is_empty() {
                candidates.iter().collect()
            } else {
                same_file
            };
            for (_, _, target) in pool
                .into_iter()
                .filter(|(_, _, id)| *id != unit.id)
                .take(MAX_AMBIGUOUS_TARGETS)
            {
                if seen.insert(target.clone()) {
                    children.push(ChildRef {
                        id: target.clone(),
                        edge: EdgeKind::Invokes,
                        line: call.line,
                    });
                }
            }
        }
        // stable: equal lines keep contains-then-call-order
        children.sort_by_key(|c| (c.line, c.edge == EdgeKind::Invokes));
        unit.children = children;
    }
    index
}
