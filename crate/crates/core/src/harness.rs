//! Instance specs, the index → locate → resolve → test pipeline, evaluation
//! metrics and trajectory analytics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ClientKind, EngineConfig, GitConfig, ResolutionConfig};
use crate::index::index_repository;
use crate::llm::{HttpClient, LlmClient, ScriptedClient};
use crate::localize::{LocalizationOutput, LocalizationTask, Localizer, RankedLocations};
use crate::prompts::{LocalizationPrompts, ResolutionPrompts};
use crate::resolve::{truncate_tail, PatchArtifact, ResolutionTask, Resolver, Sandbox};
use crate::tools::git::GitWorkspace;
use crate::trajectory::{action_label, Trajectory};
use crate::{Error, Result};

/// One evaluation instance. Relative paths are resolved against the
/// directory of the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub instance_id: String,
    pub repo: PathBuf,
    pub issue_file: PathBuf,
    /// Run through `bash -c` in a clean patched checkout; exit 0 means resolved.
    pub test_command: String,
    /// Files the reference patch touches.
    pub gold_files: Vec<String>,
    /// `path::dotted.name` of existing definitions the reference patch modifies.
    #[serde(default)]
    pub gold_functions: Vec<String>,
    #[serde(default)]
    pub localize_transcript: Option<PathBuf>,
    #[serde(default)]
    pub resolve_transcript: Option<PathBuf>,
}

impl InstanceSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: Self = toml::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.repo = base.join(&spec.repo);
        spec.issue_file = base.join(&spec.issue_file);
        spec.localize_transcript = spec.localize_transcript.map(|p| base.join(p));
        spec.resolve_transcript = spec.resolve_transcript.map(|p| base.join(p));
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance_id: String,
    pub gold_files: Vec<String>,
    pub gold_functions: Vec<String>,
    pub predicted: RankedLocations,
    /// `None` when the pipeline never reached the test run.
    pub resolved: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<PatchArtifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<Trajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Trajectory>,
    pub tokens: u64,
    pub turns: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<StageFailure>,
}

impl EvalRecord {
    fn fail(&mut self, stage: &str, err: impl std::fmt::Display) {
        self.failures.push(StageFailure {
            stage: stage.into(),
            message: err.to_string(),
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    File,
    Function,
}

/// Acc@k with the no-function filter on.
pub fn acc_at_k(records: &[EvalRecord], k: usize, level: Level) -> Result<f64> {
    acc_at_k_with(records, k, level, true)
}

/// Fraction of instances whose gold set is contained in the top-k
/// predictions. Records without gold files are not scoreable; with
/// `function_filter`, neither are records without gold functions.
pub fn acc_at_k_with(records: &[EvalRecord], k: usize, level: Level, function_filter: bool) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("no records".into()));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for r in records {
        let (gold, preds): (&[String], Vec<String>) = match level {
            Level::File => (&r.gold_files, r.predicted.files()),
            Level::Function => {
                if r.gold_functions.is_empty() && function_filter {
                    continue;
                }
                let preds = r
                    .predicted
                    .functions()
                    .into_iter()
                    .map(|(p, n)| format!("{p}::{n}"))
                    .collect();
                (&r.gold_functions, preds)
            }
        };
        if level == Level::File && gold.is_empty() {
            continue;
        }
        total += 1;
        let top: BTreeSet<&str> = preds.iter().take(k).map(String::as_str).collect();
        if gold.iter().all(|g| top.contains(g.as_str())) {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric(format!(
            "no record has gold {level:?}-level locations"
        )));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolveRate {
    pub rate: f64,
    pub resolved: usize,
    pub total: usize,
    pub warnings: Vec<String>,
}

/// Resolved over total; a record without an outcome counts as unresolved.
pub fn resolve_rate(records: &[EvalRecord]) -> Result<ResolveRate> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("no records".into()));
    }
    let warnings = records
        .iter()
        .filter(|r| r.resolved.is_none())
        .map(|r| format!("{}: no resolve outcome, counted as unresolved", r.instance_id))
        .collect();
    let resolved = records.iter().filter(|r| r.resolved == Some(true)).count();
    Ok(ResolveRate {
        rate: resolved as f64 / records.len() as f64,
        resolved,
        total: records.len(),
        warnings,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagPrevalence {
    /// Resolution runs considered.
    pub runs: usize,
    pub multi_hypothesis: usize,
    pub reversion: usize,
    pub expansion: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub instances: usize,
    pub action_frequency: BTreeMap<String, usize>,
    /// Instances by maximum search depth reached during localization.
    pub depth_histogram: BTreeMap<usize, usize>,
    /// Instances by number of hypotheses explored during resolution.
    pub hypothesis_histogram: BTreeMap<usize, usize>,
    pub flags: FlagPrevalence,
}

pub fn analyze_trajectories(records: &[EvalRecord]) -> AnalyticsReport {
    let mut report = AnalyticsReport {
        instances: records.len(),
        ..AnalyticsReport::default()
    };
    for r in records {
        for t in r.localization.iter().chain(r.resolution.iter()) {
            for inv in &t.invocations {
                *report.action_frequency.entry(action_label(inv)).or_default() += 1;
            }
        }
        if let Some(t) = &r.localization {
            *report.depth_histogram.entry(t.max_depth).or_default() += 1;
        }
        if let Some(t) = &r.resolution {
            *report.hypothesis_histogram.entry(t.hypothesis_count).or_default() += 1;
            let f = &mut report.flags;
            f.runs += 1;
            f.multi_hypothesis += t.flags.multi_hypothesis as usize;
            f.reversion += t.flags.reversion as usize;
            f.expansion += t.flags.expansion as usize;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub records: Vec<EvalRecord>,
    /// `file@k` / `function@k` to accuracy; `None` when undefined.
    pub accuracy: BTreeMap<String, Option<f64>>,
    pub resolve_rate: Option<ResolveRate>,
    pub analytics: AnalyticsReport,
}

impl EvaluationReport {
    pub fn build(mut records: Vec<EvalRecord>, config: &EngineConfig) -> Self {
        records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        let h = &config.harness;
        let mut accuracy = BTreeMap::new();
        for &k in &h.file_k {
            accuracy.insert(
                format!("file@{k}"),
                acc_at_k_with(&records, k, Level::File, h.function_filter).ok(),
            );
        }
        for &k in &h.function_k {
            let v = acc_at_k_with(&records, k, Level::Function, h.function_filter).ok();
            accuracy.insert(format!("function@{k}"), v);
        }
        Self {
            resolve_rate: resolve_rate(&records).ok(),
            analytics: analyze_trajectories(&records),
            accuracy,
            records,
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("instances: {}\n", self.records.len());
        for (name, v) in &self.accuracy {
            match v {
                Some(v) => out.push_str(&format!("{name}: {:.1}%\n", v * 100.0)),
                None => out.push_str(&format!("{name}: undefined\n")),
            }
        }
        if let Some(r) = &self.resolve_rate {
            out.push_str(&format!(
                "resolved: {}/{} ({:.1}%)\n",
                r.resolved,
                r.total,
                r.rate * 100.0
            ));
            for w in &r.warnings {
                out.push_str(&format!("  warning: {w}\n"));
            }
        }
        let a = &self.analytics;
        out.push_str("max search depth:\n");
        for (d, n) in &a.depth_histogram {
            out.push_str(&format!("  {d}: {n}\n"));
        }
        out.push_str("hypotheses explored:\n");
        for (d, n) in &a.hypothesis_histogram {
            out.push_str(&format!("  {d}: {n}\n"));
        }
        let f = &a.flags;
        out.push_str(&format!(
            "behaviors over {} runs: multi-hypothesis {}, reversion {}, expansion {}\n",
            f.runs, f.multi_hypothesis, f.reversion, f.expansion
        ));
        out.push_str("actions:\n");
        for (name, n) in &a.action_frequency {
            out.push_str(&format!("  {name}: {n}\n"));
        }
        for r in &self.records {
            for f in &r.failures {
                out.push_str(&format!("{}: {} failed: {}\n", r.instance_id, f.stage, f.message));
            }
        }
        out
    }
}

/// Git settings for harness-created checkouts: timestamps are always
/// pinned so records replay identically.
pub fn pinned_git(config: &EngineConfig) -> GitConfig {
    GitConfig {
        pinned_epoch: Some(config.git.pinned_epoch.unwrap_or(config.harness.default_epoch)),
        ..config.git.clone()
    }
}

/// Copies `repo` to `dest` and commits it as the original state.
pub fn prepare_checkout(repo: &Path, dest: &Path, git: &GitConfig) -> Result<String> {
    crate::fsutil::copy_tree(repo, dest)?;
    let mut ws = GitWorkspace::new(dest, git);
    ws.run(&["init", "-q", "-b", "main"])?;
    ws.run(&["add", "-A"])?;
    let out = ws.raw(&["commit", "-q", "--allow-empty", "-m", "original state"], Some(0))?;
    if out.code != 0 {
        return Err(Error::Git {
            message: format!("initial commit failed: {}", out.stderr.trim()),
            log: Vec::new(),
        });
    }
    ws.head()
}

/// A client for one stage: the transcript when scripted, the HTTP adapter
/// otherwise.
pub fn make_client(config: &EngineConfig, transcript: Option<&Path>) -> Result<Box<dyn LlmClient>> {
    match config.client.kind {
        ClientKind::Http => Ok(Box::new(HttpClient::new(&config.client)?)),
        ClientKind::Scripted => {
            let path = transcript.ok_or_else(|| Error::Client("no transcript given for the scripted client".into()))?;
            Ok(Box::new(ScriptedClient::from_file(path)?))
        }
    }
}

/// Optional directory receiving per-instance artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub artifacts: Option<PathBuf>,
}

/// Runs every stage for one instance. Stage failures are recorded and the
/// remaining stages still run where they can.
pub fn run_instance(config: &EngineConfig, spec: &InstanceSpec, options: &RunOptions) -> EvalRecord {
    let mut record = EvalRecord {
        instance_id: spec.instance_id.clone(),
        gold_files: spec.gold_files.clone(),
        gold_functions: spec.gold_functions.clone(),
        ..EvalRecord::default()
    };
    if let Err(e) = pipeline(config, spec, options, &mut record) {
        record.fail("setup", e);
    }
    record.tokens = record
        .localization
        .iter()
        .chain(record.resolution.iter())
        .map(|t| t.total_tokens())
        .sum();
    record.turns = record
        .localization
        .iter()
        .chain(record.resolution.iter())
        .map(|t| t.turns)
        .sum();
    record
}

fn save_artifact(options: &RunOptions, spec: &InstanceSpec, name: &str, text: &str) -> Result<()> {
    if let Some(dir) = &options.artifacts {
        crate::fsutil::write_atomic(&dir.join(&spec.instance_id).join(name), text.as_bytes())?;
    }
    Ok(())
}

fn pipeline(config: &EngineConfig, spec: &InstanceSpec, options: &RunOptions, record: &mut EvalRecord) -> Result<()> {
    let git = pinned_git(config);
    let issue = std::fs::read_to_string(&spec.issue_file).map_err(|e| Error::io(&spec.issue_file, e))?;
    let tmp = tempfile::tempdir().map_err(|e| Error::io(Path::new("tempdir"), e))?;
    let workspace = tmp.path().join("workspace");
    prepare_checkout(&spec.repo, &workspace, &git)?;

    match index_repository(&workspace, &config.index) {
        Ok(index) => {
            save_artifact(options, spec, "index.json", &index.to_json())?;
            let located = LocalizationPrompts::load(&config.prompts).and_then(|prompts| {
                let localizer = Localizer::new(&index, &config.search, &config.localization, prompts)?;
                let mut client = make_client(config, spec.localize_transcript.as_deref())?;
                let task = LocalizationTask {
                    instance_id: spec.instance_id.clone(),
                    repo_name: spec.instance_id.clone(),
                    issue: issue.clone(),
                    iteration_limit: config.localization.iteration_limit,
                };
                localizer.run(&task, client.as_mut()).map_err(|f| {
                    record.localization = Some(*f.trajectory);
                    f.error
                })
            });
            match located {
                Ok(out) => {
                    save_artifact(
                        options,
                        spec,
                        "locate.json",
                        &serde_json::to_string_pretty(&out).expect("serializes"),
                    )?;
                    let LocalizationOutput {
                        locations, trajectory, ..
                    } = out;
                    record.predicted = locations;
                    record.localization = Some(trajectory);
                }
                Err(e) => record.fail("locate", e),
            }
        }
        Err(e) => record.fail("index", e),
    }

    let patch = ResolutionPrompts::load(&config.prompts).and_then(|prompts| {
        let resolver = Resolver::new(&config.resolution, &git, prompts);
        let mut client = make_client(config, spec.resolve_transcript.as_deref())?;
        let task = ResolutionTask {
            instance_id: spec.instance_id.clone(),
            repo_name: spec.instance_id.clone(),
            issue: issue.clone(),
            locations: record.predicted.clone(),
            workspace: workspace.clone(),
            memory_path: tmp.path().join("memory.json"),
        };
        match resolver.run(&task, client.as_mut()) {
            Ok(outcome) => {
                save_artifact(options, spec, "memory.json", &outcome.memory.to_canonical_json())?;
                record.resolution = Some(outcome.trajectory);
                Ok(outcome.patch)
            }
            Err(f) => {
                record.resolution = Some(*f.trajectory);
                Err(f.error)
            }
        }
    });
    let patch = match patch {
        Ok(p) => p,
        Err(e) => {
            record.fail("resolve", e);
            return Ok(());
        }
    };
    save_artifact(options, spec, "patch.diff", &patch.diff)?;

    match test_patch(config, spec, &patch, &git, tmp.path()) {
        Ok((passed, output)) => {
            record.resolved = Some(passed);
            record.test_output = Some(output);
        }
        Err(e) => {
            record.resolved = Some(false);
            record.fail("test", e);
        }
    }
    record.patch = Some(patch);
    Ok(())
}

/// Applies the patch to a fresh checkout of the original state and runs the
/// instance's test command there.
fn test_patch(
    config: &EngineConfig,
    spec: &InstanceSpec,
    patch: &PatchArtifact,
    git: &GitConfig,
    scratch: &Path,
) -> Result<(bool, String)> {
    let clean = scratch.join("clean");
    let original = prepare_checkout(&spec.repo, &clean, git)?;
    if original != patch.original_hash {
        return Err(Error::Consistency(format!(
            "clean checkout is {original}, patch was made against {}",
            patch.original_hash
        )));
    }
    if !patch.diff.is_empty() {
        let file = scratch.join("submission.patch");
        std::fs::write(&file, &patch.diff).map_err(|e| Error::io(&file, e))?;
        GitWorkspace::new(&clean, git).run(&["apply", "--binary", &file.to_string_lossy()])?;
    }
    let sandbox_cfg = ResolutionConfig {
        command_timeout_secs: config.harness.test_timeout_secs,
        allowed_system_paths: Vec::new(),
        ..config.resolution.clone()
    };
    let sandbox = Sandbox::new(&clean, &sandbox_cfg)?;
    let out = sandbox.run(&spec.test_command)?;
    let passed = out.exit_code == Some(0) && !out.timed_out;
    Ok((passed, truncate_tail(&out.output, config.resolution.observation_chars)))
}

/// Runs instances on a worker pool; records come back sorted by id.
pub fn evaluate(config: &EngineConfig, specs: &[InstanceSpec], options: &RunOptions) -> Result<EvaluationReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.harness.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let records = pool.install(|| specs.par_iter().map(|s| run_instance(config, s, options)).collect());
    Ok(EvaluationReport::build(records, config))
}
