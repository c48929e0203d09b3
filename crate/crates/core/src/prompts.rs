//! Prompt templates loaded from TOML assets. The built-in assets can be
//! replaced by files named in the engine config.

use std::path::Path;

use serde::Deserialize;

use crate::config::PromptPaths;
use crate::{Error, Result};

const LOCALIZATION: &str = include_str!("../assets/prompts/localization.toml");
const RESOLUTION: &str = include_str!("../assets/prompts/resolution.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationPrompts {
    pub system: String,
    pub instance: String,
    pub next_action: String,
    pub first_stage: String,
    pub second_stage: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionPrompts {
    pub system: String,
    pub instance: String,
    pub next_action: String,
    pub submission: String,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("prompt asset {origin}: {e}")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl LocalizationPrompts {
    pub fn load(paths: &PromptPaths) -> Result<Self> {
        match &paths.localization {
            Some(p) => parse(&read(p)?, &p.display().to_string()),
            None => parse(LOCALIZATION, "localization.toml"),
        }
    }
}

impl ResolutionPrompts {
    pub fn load(paths: &PromptPaths) -> Result<Self> {
        match &paths.resolution {
            Some(p) => parse(&read(p)?, &p.display().to_string()),
            None => parse(RESOLUTION, "resolution.toml"),
        }
    }
}

/// Substitutes `{{name}}` placeholders. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim().to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}", name = name), value);
    }
    out
}
