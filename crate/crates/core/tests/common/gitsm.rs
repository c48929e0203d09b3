//! Random valid action sequences over the git tool family, checked against
//! independent git reads and worktree snapshots.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sleuth_core::config::GitConfig;
use sleuth_core::memory::{Status, WorkingMemoryState};
use sleuth_core::tools::git::{self, GitWorkspace};
use sleuth_core::tools::plan;

use super::{git as oracle, init_repo, snapshot, SplitMix};

type Snapshot = BTreeMap<PathBuf, Vec<u8>>;

#[derive(Debug, Default, Clone, Copy)]
pub struct SequenceStats {
    pub actions: usize,
    pub commits: usize,
    pub reverts: usize,
    pub snapshot_checks: usize,
    pub merged: bool,
}

struct Model {
    rng: SplitMix,
    dir: PathBuf,
    ws: GitWorkspace,
    memory: WorkingMemoryState,
    /// Worktree right after each checkpoint commit, by (hypothesis, todo).
    snapshots: BTreeMap<(String, String), Snapshot>,
    /// Checkpoint hashes read independently, by (hypothesis, todo).
    hashes: BTreeMap<(String, String), String>,
    original: String,
    next_h: usize,
    stats: SequenceStats,
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

impl Model {
    fn current(&self) -> Option<String> {
        let b = oracle(&self.dir, &["branch", "--show-current"]);
        self.memory.hypothesis_for_branch(&b).map(|h| h.name.clone())
    }

    fn touch_files(&mut self) {
        let files = ["src/a.py", "src/b.py", "extra/new.py", "notes.txt"];
        for _ in 0..1 + self.rng.below(2) {
            let f = self.dir.join(files[self.rng.below(files.len())]);
            match self.rng.below(4) {
                0 if f.exists() => std::fs::remove_file(&f).unwrap(),
                1 if f.exists() => {
                    let mut s = std::fs::read_to_string(&f).unwrap();
                    s.push_str(&format!("line_{}\n", self.rng.next_u64() % 1000));
                    std::fs::write(&f, s).unwrap();
                }
                _ => {
                    std::fs::create_dir_all(f.parent().unwrap()).unwrap();
                    std::fs::write(&f, format!("value = {}\n", self.rng.next_u64() % 1000)).unwrap();
                }
            }
        }
    }

    /// Finishes the running hypothesis (if any) and opens a new in-progress
    /// one with 1-3 to-dos.
    fn new_hypothesis(&mut self) -> Result<String, String> {
        self.next_h += 1;
        let name = format!("H{}", self.next_h);
        let mut doc = String::new();
        for h in &self.memory.hypotheses {
            if h.status == Status::InProgress {
                doc.push_str(&format!("- [!] {}\n", h.name));
            }
        }
        doc.push_str(&format!("- [-] {name}: attempt {} (confidence: 0.5)\n", self.next_h));
        plan::update_hypothesis(&mut self.memory, &doc).map_err(|e| e.to_string())?;
        let todos: String = (0..1 + self.rng.below(3))
            .map(|i| {
                format!(
                    "- [ ] step {i} of {name} ({})\n",
                    if i % 2 == 0 { "edit" } else { "test" }
                )
            })
            .collect();
        plan::update_todo(&mut self.memory, &name, &todos).map_err(|e| e.to_string())?;
        Ok(name)
    }

    fn start(&mut self) -> Result<(), String> {
        let name = self.new_hypothesis()?;
        let branch = name.to_lowercase();
        git::start_hypothesis(&mut self.ws, &mut self.memory, &branch).map_err(|e| e.to_string())?;
        let base = self.memory.base_hash.clone().unwrap();
        check(oracle(&self.dir, &["rev-parse", "HEAD"]) == base, || {
            "start: HEAD is not the base".into()
        })?;
        check(oracle(&self.dir, &["status", "--porcelain"]).is_empty(), || {
            "start: dirty worktree".into()
        })
    }

    fn commit(&mut self) -> Result<bool, String> {
        let Some(name) = self.current() else { return Ok(false) };
        let h = self.memory.hypothesis(&name).unwrap();
        let Some(todo) = h
            .todos
            .iter()
            .find(|t| t.checkpoint.is_none())
            .map(|t| t.content.clone())
        else {
            return Ok(false);
        };
        if self.rng.chance(75) {
            self.touch_files();
        }
        let msg = format!("{todo} done");
        git::commit_todo(&mut self.ws, &mut self.memory, &todo, &msg).map_err(|e| e.to_string())?;
        let head = oracle(&self.dir, &["rev-parse", "HEAD"]);
        let stored = &self.memory.lookup_checkpoint(&name, &todo).unwrap().hash;
        check(*stored == head, || format!("commit: stored {stored} != HEAD {head}"))?;
        check(oracle(&self.dir, &["log", "-1", "--format=%s", &head]) == msg, || {
            "commit message".into()
        })?;
        self.snapshots.insert((name.clone(), todo.clone()), snapshot(&self.dir));
        self.hashes.insert((name, todo), head);
        self.stats.commits += 1;
        Ok(true)
    }

    fn revert(&mut self) -> Result<bool, String> {
        if self.hashes.is_empty() {
            return Ok(false);
        }
        let keys: Vec<_> = self.hashes.keys().cloned().collect();
        let (src_h, src_t) = keys[self.rng.below(keys.len())].clone();
        if self.rng.chance(50) {
            self.touch_files(); // uncommitted work must be stashed away
        }
        let name = self.new_hypothesis()?;
        let branch = format!("{}-from-{}", name.to_lowercase(), src_h.to_lowercase());
        git::revert_to(&mut self.ws, &mut self.memory, &src_h, &src_t, &branch).map_err(|e| e.to_string())?;
        let want = &self.snapshots[&(src_h.clone(), src_t.clone())];
        check(snapshot(&self.dir) == *want, || {
            format!("revert to {src_h}/{src_t}: worktree differs")
        })?;
        check(
            oracle(&self.dir, &["rev-parse", "HEAD"]) == self.hashes[&(src_h.clone(), src_t.clone())],
            || "revert: HEAD is not the checkpoint".into(),
        )?;
        let src = self.memory.hypothesis(&src_h).unwrap();
        let idx = src.todos.iter().position(|t| t.content == src_t).unwrap();
        check(src.todos[idx + 1..].iter().all(|t| t.status == Status::Failed), || {
            "revert: later to-dos not failed".into()
        })?;
        self.stats.reverts += 1;
        self.stats.snapshot_checks += 1;
        Ok(true)
    }

    /// Every hash in memory against independent reads, and one commit per
    /// checkpoint on each branch.
    fn audit(&self) -> Result<(), String> {
        let m = &self.memory;
        m.validate().map_err(|e| e.to_string())?;
        check(m.original_state_hash.as_deref() == Some(self.original.as_str()), || {
            "original hash".into()
        })?;
        let base = m.base_hash.clone().unwrap();
        check(
            oracle(&self.dir, &["rev-parse", &format!("{base}^")]) == self.original,
            || "base is not a child of the original state".into(),
        )?;
        for h in &m.hypotheses {
            for t in &h.todos {
                if let Some(cp) = &t.checkpoint {
                    let want = &self.hashes[&(h.name.clone(), t.content.clone())];
                    check(&cp.hash == want, || {
                        format!("checkpoint {}/{} drifted", h.name, t.content)
                    })?;
                    check(oracle(&self.dir, &["cat-file", "-t", &cp.hash]) == "commit", || {
                        "not a commit".into()
                    })?;
                }
            }
            let Some(branch) = &h.branch else { continue };
            let origin = h.origin_hash.clone().unwrap();
            let tip = oracle(&self.dir, &["rev-parse", &format!("refs/heads/{branch}")]);
            let count: usize = oracle(&self.dir, &["rev-list", "--count", &format!("{origin}..{tip}")])
                .parse()
                .unwrap();
            let checkpoints = h.todos.iter().filter(|t| t.checkpoint.is_some()).count();
            check(count == checkpoints, || {
                format!("{branch}: {count} commits beyond origin, {checkpoints} checkpoints")
            })?;
            let tip_known = if checkpoints == 0 {
                tip == origin
            } else {
                h.todos
                    .iter()
                    .filter_map(|t| t.checkpoint.as_ref())
                    .any(|c| c.hash == tip)
            };
            check(tip_known, || {
                format!("{branch}: tip {tip} is not a recorded checkpoint")
            })?;
        }
        Ok(())
    }

    fn merge(&mut self) -> Result<(), String> {
        let branches: Vec<String> = self.memory.hypotheses.iter().filter_map(|h| h.branch.clone()).collect();
        if branches.is_empty() {
            return Ok(());
        }
        let pick = branches[self.rng.below(branches.len())].clone();
        if branches.len() > 1 || self.rng.chance(50) {
            git::compare_hypotheses(&mut self.ws, &mut self.memory).map_err(|e| e.to_string())?;
            let rows = git::compare(&mut self.ws, &self.memory).map_err(|e| e.to_string())?;
            for r in rows.iter().filter(|r| r.stat.is_some()) {
                let b = r.branch.as_deref().unwrap();
                let want = oracle(&self.dir, &["diff", "--numstat", &self.original, b]);
                check(r.stat.as_ref().unwrap().files.len() == want.lines().count(), || {
                    format!("compare: numstat mismatch on {b}")
                })?;
            }
        }
        git::merge_solution(&mut self.ws, &mut self.memory, &pick).map_err(|e| e.to_string())?;
        let merged = oracle(&self.dir, &["diff", &self.original, "HEAD"]);
        let tip = oracle(&self.dir, &["diff", &self.original, &pick]);
        check(merged == tip, || {
            format!("merge of {pick}: diff differs from branch tip")
        })?;
        check(oracle(&self.dir, &["branch", "--show-current"]).is_empty(), || {
            "merge: HEAD not detached".into()
        })?;
        let again = git::merge_solution(&mut self.ws, &mut self.memory, &pick);
        check(again.is_err(), || "second merge accepted".into())?;
        self.stats.merged = true;
        Ok(())
    }
}

fn seed_repo(dir: &Path, rng: &mut SplitMix) -> String {
    std::fs::create_dir_all(dir.join("src")).unwrap();
    std::fs::write(dir.join("src/a.py"), "def a():\n    return 1\n").unwrap();
    std::fs::write(dir.join("src/b.py"), "def b():\n    return 2\n").unwrap();
    let original = init_repo(dir);
    if rng.chance(50) {
        std::fs::write(dir.join("repro_issue.py"), "print('repro')\n").unwrap();
    }
    original
}

/// Runs one generated sequence: init, then a random mix of start, commit,
/// dirty-edit and revert actions, then compare and merge.
pub fn run_sequence(seed: u64) -> Result<SequenceStats, String> {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let mut rng = SplitMix(seed);
    let original = seed_repo(&dir, &mut rng);
    let cfg = GitConfig {
        pinned_epoch: Some(1_700_000_000),
        ..GitConfig::default()
    };
    let mut m = Model {
        rng,
        ws: GitWorkspace::new(&dir, &cfg),
        dir: dir.clone(),
        memory: WorkingMemoryState::default(),
        snapshots: BTreeMap::new(),
        hashes: BTreeMap::new(),
        original,
        next_h: 0,
        stats: SequenceStats::default(),
    };
    git::init_base(&mut m.ws, &mut m.memory).map_err(|e| e.to_string())?;
    check(git::init_base(&mut m.ws, &mut m.memory).is_err(), || {
        "second init accepted".into()
    })?;
    m.start()?;
    let steps = 3 + m.rng.below(7);
    for _ in 0..steps {
        let (acted, branched) = match m.rng.below(10) {
            0 | 1 => (m.start().map(|_| true)?, true),
            2..=6 => (m.commit()?, false),
            7 => {
                m.touch_files();
                (true, false)
            }
            _ => (m.revert()?, true),
        };
        if acted {
            m.stats.actions += 1;
        }
        if branched {
            m.audit()?;
        }
        // a doomed action must leave memory untouched
        let snapshot_memory = m.memory.clone();
        let bad = git::commit_todo(&mut m.ws, &mut m.memory, "no such to-do", "x");
        check(bad.is_err() && m.memory == snapshot_memory, || {
            "failed action changed memory".into()
        })?;
    }
    if m.rng.chance(85) {
        m.merge()?;
    }
    m.audit()?;
    Ok(m.stats)
}
