//! Shared entry point of the `hypothesis_plan` and `hypothesis_git` binaries.
//!
//! The workspace is the current directory unless `SLEUTH_WORKSPACE` is set.
//! The memory file is `SLEUTH_MEMORY` if set, otherwise
//! `<registry>/<SLEUTH_INSTANCE_ID>.json` with the registry directory taken
//! from `SLEUTH_REGISTRY_DIR` (or the config file named by `SLEUTH_CONFIG`).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use sleuth_core::memory::MemoryRegistry;
use sleuth_core::tools::cli::{dispatch, error_text, usage, ToolContext};
use sleuth_core::EngineConfig;

fn context() -> Result<ToolContext> {
    let config = match std::env::var_os("SLEUTH_CONFIG") {
        Some(p) => EngineConfig::load(&PathBuf::from(p))?,
        None => EngineConfig::default(),
    };
    let workspace = match std::env::var_os("SLEUTH_WORKSPACE") {
        Some(p) => PathBuf::from(p),
        None => std::env::current_dir().context("no current directory")?,
    };
    let memory_path = match std::env::var_os("SLEUTH_MEMORY") {
        Some(p) => PathBuf::from(p),
        None => {
            let id = std::env::var("SLEUTH_INSTANCE_ID").unwrap_or_else(|_| "instance".into());
            MemoryRegistry::new(config.registry.resolve(None)).path_for(&id)
        }
    };
    Ok(ToolContext {
        workspace,
        memory_path,
        git: config.git,
    })
}

pub fn tool_main(family: &str) -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if matches!(args.first().map(String::as_str), Some("-h" | "--help")) {
        print!("{}", usage(family));
        return ExitCode::SUCCESS;
    }
    let ctx = match context() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{family}: {e:#}");
            return ExitCode::from(2);
        }
    };
    match dispatch(family, &args, &ctx) {
        Ok(out) => {
            println!("{}", out.text);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_text(family, &e));
            ExitCode::FAILURE
        }
    }
}
