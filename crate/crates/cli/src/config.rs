//! Run configuration: a single keyed document (JSON or TOML), every key
//! overridable by a CLI flag. Secrets stay in environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specfix_core::gateway::LLMConfig;
use specfix_core::orchestrator::{BudgetConfig, ReasoningStrategy};
use specfix_core::pipeline::TestAdapterConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse ({path}): {message}")]
    Parse { path: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: LLMConfig,
    pub budget: BudgetConfig,
    pub strategy: ReasoningStrategy,
    pub adapter: Option<TestAdapterConfig>,
    pub example_store: Option<PathBuf>,
    /// Explicit opt-out from retrieval when a reasoning strategy runs
    /// without an example store.
    pub no_retrieval: bool,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub replay: Option<PathBuf>,
    /// Directory of prompt template files; the embedded defaults are
    /// materialized into the output directory when unset.
    pub templates_dir: Option<PathBuf>,
    pub agent_max_tool_calls: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: LLMConfig::default(),
            budget: BudgetConfig::default(),
            strategy: ReasoningStrategy::None,
            adapter: None,
            example_store: None,
            no_retrieval: false,
            output_dir: PathBuf::from("out"),
            parallelism: 1,
            replay: None,
            templates_dir: None,
            agent_max_tool_calls: 12,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.display().to_string(),
            message,
        };
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| parse_err(e.to_string())),
            _ => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.strategy != ReasoningStrategy::None
            && self.example_store.is_none()
            && !self.no_retrieval
        {
            return Err(ConfigError::Invalid(
                "strategy minir/maxr requires example_store (or no_retrieval = true)"
                    .to_string(),
            ));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".to_string()));
        }
        if self.adapter.is_none() {
            return Err(ConfigError::Invalid(
                "an adapter (scripted or command) must be configured".to_string(),
            ));
        }
        Ok(())
    }

    /// Per-bug replay script: a directory resolves to `<bug_id>.json`
    /// inside it, a file is used as-is.
    pub fn replay_script_for(&self, bug_id: &str) -> Option<PathBuf> {
        self.replay.as_ref().map(|p| {
            if p.is_dir() {
                p.join(format!("{bug_id}.json"))
            } else {
                p.clone()
            }
        })
    }
}
