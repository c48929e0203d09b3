//! Engine configuration: language registry, search weights and budgets,
//! agent limits, Git identity and prompt asset locations. Every section has
//! defaults, so an empty TOML document is a valid config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the working-memory registry directory.
pub const REGISTRY_ENV: &str = "SLEUTH_REGISTRY_DIR";

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EngineConfig {
    pub index: IndexConfig,
    pub search: SearchConfig,
    pub localization: LocalizationConfig,
    pub resolution: ResolutionConfig,
    pub git: GitConfig,
    pub prompts: PromptPaths,
    pub registry: RegistryConfig,
    pub client: ClientConfig,
    pub harness: HarnessConfig,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct IndexConfig {
    /// Extension (without dot) to grammar id.
    pub languages: BTreeMap<String, String>,
    /// Glob patterns over repo-relative paths that are never indexed.
    pub ignore: Vec<String>,
    pub chunk_lines: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        let mut languages = BTreeMap::new();
        languages.insert("py".to_string(), "python".to_string());
        Self {
            languages,
            ignore: vec![
                ".git/**".into(),
                "**/.git/**".into(),
                "**/__pycache__/**".into(),
                "**/.venv/**".into(),
                "**/node_modules/**".into(),
            ],
            chunk_lines: 200,
        }
    }
}

/// Standalone language-registry file accepted by `index --lang-config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LanguageConfigFile {
    pub languages: BTreeMap<String, String>,
    pub ignore: Option<Vec<String>>,
}

impl LanguageConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(self, index: &mut IndexConfig) {
        if !self.languages.is_empty() {
            index.languages = self.languages;
        }
        if let Some(ignore) = self.ignore {
            index.ignore = ignore;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SearchConfig {
    /// Weights for (n-gram, Jaro-Winkler, LCS); must sum to 1.
    pub weights: [f64; 3],
    pub ngram: usize,
    pub jw_prefix_scale: f64,
    pub jw_prefix_cap: usize,
    /// Jaro score above which the common-prefix boost applies.
    pub jw_boost_threshold: f64,
    pub result_cap: usize,
    pub hit_line_budget: usize,
    pub response_line_budget: usize,
    /// Return full unit source instead of previews (context-management ablation).
    pub full_code: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            weights: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            ngram: 2,
            jw_prefix_scale: 0.1,
            jw_prefix_cap: 4,
            jw_boost_threshold: 0.7,
            result_cap: 10,
            hit_line_budget: 30,
            response_line_budget: 120,
            full_code: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LocalizationConfig {
    pub iteration_limit: usize,
    /// Cap on full-source bytes sent with the second-stage filter prompt.
    pub stage2_byte_budget: usize,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            iteration_limit: 20,
            stage2_byte_budget: 60_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ResolutionConfig {
    pub turn_budget: usize,
    /// Optional ceiling on estimated tokens sent to the client.
    pub token_ceiling: Option<u64>,
    pub observation_chars: usize,
    pub command_timeout_secs: u64,
    /// Basename globs identifying reproduction scripts removed at submission.
    pub repro_patterns: Vec<String>,
    pub restore_test_files: bool,
    /// Absolute path prefixes a bash command may reference outside the workspace.
    pub allowed_system_paths: Vec<String>,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        Self {
            turn_budget: 75,
            token_ceiling: None,
            observation_chars: 10_000,
            command_timeout_secs: 120,
            repro_patterns: vec!["repro_*.py".into(), "repro_*".into()],
            restore_test_files: true,
            allowed_system_paths: vec!["/usr/".into(), "/bin/".into(), "/dev/null".into(), "/tmp/".into()],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GitConfig {
    pub user_name: String,
    pub user_email: String,
    /// When set, commit timestamps are `pinned_epoch + logical clock`, which
    /// makes commit hashes reproducible across runs.
    pub pinned_epoch: Option<i64>,
}

impl Default for GitConfig {
    fn default() -> Self {
        Self {
            user_name: "sleuth-engine".into(),
            user_email: "engine@sleuth.invalid".into(),
            pinned_epoch: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PromptPaths {
    pub localization: Option<PathBuf>,
    pub resolution: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RegistryConfig {
    pub dir: Option<PathBuf>,
}

impl RegistryConfig {
    /// Flag beats environment beats config file; falls back to `.sleuth/registry`.
    pub fn resolve(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Ok(p) = std::env::var(REGISTRY_ENV) {
            if !p.is_empty() {
                return PathBuf::from(p);
            }
        }
        self.dir.clone().unwrap_or_else(|| PathBuf::from(".sleuth/registry"))
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    /// Replay recorded transcripts (offline, deterministic).
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ClientConfig {
    pub kind: ClientKind,
    /// Base URL of the chat endpoint used by the HTTP adapter.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    /// Transport retries before a run is aborted.
    pub retries: usize,
    pub timeout_secs: u64,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    pub api_key_env: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            kind: ClientKind::Scripted,
            endpoint: "http://127.0.0.1:8080/v1/chat".into(),
            model: "default".into(),
            temperature: 0.1,
            retries: 2,
            timeout_secs: 120,
            api_key_env: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct HarnessConfig {
    /// Worker threads for `evaluate`; 0 uses one per core.
    pub workers: usize,
    /// Drop instances whose gold patch touches no existing function from
    /// function-level scoring.
    pub function_filter: bool,
    pub test_timeout_secs: u64,
    /// Commit timestamp base used when `git.pinned_epoch` is unset, so
    /// evaluation records are reproducible.
    pub default_epoch: i64,
    pub file_k: Vec<usize>,
    pub function_k: Vec<usize>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            workers: 0,
            function_filter: true,
            test_timeout_secs: 300,
            default_epoch: 1_700_000_000,
            file_k: vec![1, 3, 5],
            function_k: vec![5, 10],
        }
    }
}
