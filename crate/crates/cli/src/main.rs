use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sleuth_core::config::LanguageConfigFile;
use sleuth_core::harness::{
    evaluate, make_client, pinned_git, run_instance, EvalRecord, EvaluationReport, InstanceSpec, RunOptions,
};
use sleuth_core::localize::{LocalizationOutput, LocalizationTask, Localizer};
use sleuth_core::memory::MemoryRegistry;
use sleuth_core::prompts::{LocalizationPrompts, ResolutionPrompts};
use sleuth_core::resolve::{ResolutionTask, Resolver};
use sleuth_core::{index_repository, CodeIndex, EngineConfig};

#[derive(Parser)]
#[command(
    name = "sleuth",
    version,
    about = "Code indexing, localization and hypothesis-driven issue resolution"
)]
struct Cli {
    /// TOML engine config; every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a repository and print the index JSON.
    Index {
        repo: PathBuf,
        /// Language registry override (`[languages] py = "python"`).
        #[arg(long)]
        lang_config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the localization agent and print the ranked locations.
    Locate {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        issue: PathBuf,
        /// Transcript for the scripted client.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Prebuilt index; built on the fly otherwise.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value = "instance")]
        instance_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the resolution agent in a Git checkout and print the patch artifact.
    Resolve {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        issue: PathBuf,
        /// Output of `locate`; without it the agent gets no hints.
        #[arg(long)]
        locations: Option<PathBuf>,
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long, default_value = "instance")]
        instance_id: String,
        /// Working-memory registry directory.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the bare unified diff here.
        #[arg(long)]
        diff: Option<PathBuf>,
    },
    /// Run instance specs end to end and write the evaluation report.
    Evaluate {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-instance index, locations, memory and patch.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-run an instance and check the record is unchanged.
    Replay {
        spec: PathBuf,
        /// Earlier record or evaluation report to compare against; without
        /// it the instance runs twice.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Summarize an evaluation report.
    Report {
        report: PathBuf,
        /// Print the analytics as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            sleuth_core::fsutil::write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_record(path: &Path, id: &str) -> Result<EvalRecord> {
    let text = read(path)?;
    if let Ok(report) = serde_json::from_str::<EvaluationReport>(&text) {
        return report
            .records
            .into_iter()
            .find(|r| r.instance_id == id)
            .with_context(|| format!("{} has no record for {id}", path.display()));
    }
    serde_json::from_str(&text).with_context(|| format!("{} is neither a record nor a report", path.display()))
}

/// First differing line of two pretty-printed JSON records.
fn first_difference(a: &str, b: &str) -> Option<String> {
    let mut la = a.lines();
    let mut lb = b.lines();
    for n in 1.. {
        match (la.next(), lb.next()) {
            (None, None) => return None,
            (x, y) if x == y => continue,
            (x, y) => {
                return Some(format!(
                    "line {n}:\n  expected: {}\n  actual:   {}",
                    x.unwrap_or("<end>"),
                    y.unwrap_or("<end>")
                ))
            }
        }
    }
    None
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = match &cli.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    match cli.command {
        Command::Index { repo, lang_config, out } => {
            if let Some(p) = lang_config {
                LanguageConfigFile::load(&p)?.apply(&mut config.index);
            }
            let index = index_repository(&repo, &config.index)?;
            emit(&index.to_json(), out.as_deref())?;
        }
        Command::Locate {
            repo,
            issue,
            transcript,
            index,
            instance_id,
            out,
        } => {
            let index = match index {
                Some(p) => CodeIndex::load(&p)?,
                None => index_repository(&repo, &config.index)?,
            };
            let prompts = LocalizationPrompts::load(&config.prompts)?;
            let localizer = Localizer::new(&index, &config.search, &config.localization, prompts)?;
            let mut client = make_client(&config, transcript.as_deref())?;
            let task = LocalizationTask {
                repo_name: repo
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                instance_id,
                issue: read(&issue)?,
                iteration_limit: config.localization.iteration_limit,
            };
            let output = localizer.run(&task, client.as_mut())?;
            emit(&serde_json::to_string_pretty(&output)?, out.as_deref())?;
        }
        Command::Resolve {
            repo,
            issue,
            locations,
            transcript,
            instance_id,
            registry,
            out,
            diff,
        } => {
            let locations = match locations {
                Some(p) => LocalizationOutput::load(&p)?.locations,
                None => Default::default(),
            };
            let registry = MemoryRegistry::new(config.registry.resolve(registry.as_deref()));
            let task = ResolutionTask {
                repo_name: repo
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                memory_path: registry.path_for(&instance_id),
                instance_id,
                issue: read(&issue)?,
                locations,
                workspace: repo,
            };
            let resolver = Resolver::new(
                &config.resolution,
                &config.git,
                ResolutionPrompts::load(&config.prompts)?,
            );
            let mut client = make_client(&config, transcript.as_deref())?;
            let outcome = resolver.run(&task, client.as_mut())?;
            for w in &outcome.trajectory.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(p) = diff {
                sleuth_core::fsutil::write_atomic(&p, outcome.patch.diff.as_bytes())?;
            }
            let body = serde_json::json!({ "patch": outcome.patch, "trajectory": outcome.trajectory });
            emit(&serde_json::to_string_pretty(&body)?, out.as_deref())?;
        }
        Command::Evaluate {
            specs,
            out,
            artifacts,
            workers,
        } => {
            if let Some(w) = workers {
                config.harness.workers = w;
            }
            let specs = specs
                .iter()
                .map(|p| InstanceSpec::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let report = evaluate(&config, &specs, &RunOptions { artifacts })?;
            eprint!("{}", report.render());
            emit(&serde_json::to_string_pretty(&report)?, out.as_deref())?;
        }
        Command::Replay { spec, record } => {
            let spec = InstanceSpec::load(&spec)?;
            // replays must be comparable, so commits are always pinned
            config.git = pinned_git(&config);
            let expected = match record {
                Some(p) => load_record(&p, &spec.instance_id)?,
                None => run_instance(&config, &spec, &RunOptions::default()),
            };
            let actual = run_instance(&config, &spec, &RunOptions::default());
            let (a, b) = (
                serde_json::to_string_pretty(&expected)?,
                serde_json::to_string_pretty(&actual)?,
            );
            match first_difference(&a, &b) {
                None => println!("{}: replay identical", spec.instance_id),
                Some(diff) => {
                    println!("{}: replay drift at {diff}", spec.instance_id);
                    return Ok(ExitCode::FAILURE);
                }
            }
        }
        Command::Report { report, json } => {
            let report: EvaluationReport =
                serde_json::from_str(&read(&report)?).with_context(|| format!("parsing {}", report.display()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report.analytics)?);
            } else {
                print!("{}", report.render());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
