//! Run configuration: one TOML file governs one experiment. The effective
//! config (defaults + file + flag overrides) is echoed into the run manifest
//! that accompanies every report.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::corpus::{CorpusFormat, LanguageId, UmrBlocksOptions};
use crate::llm_client::{ModelPrice, PriceTable, RetryPolicy, TransportMode};
use crate::metrics::ChrfParams;
use crate::prompting::Protocol;
use crate::selection::SelectionParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {path}")]
    NotFound { path: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub language: LanguageId,
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
    #[serde(default)]
    pub umr_blocks: UmrBlocksOptions,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Jsonl
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSettings {
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in configs, manifests or caches.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_prices")]
    pub prices: PriceTable,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".into()
}

fn default_model() -> String {
    "gpt-4".into()
}

fn default_max_output_tokens() -> u32 {
    512
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}

fn default_max_in_flight() -> usize {
    4
}

fn default_prices() -> PriceTable {
    [("gpt-4".to_string(), ModelPrice { input_per_1k: 0.03, output_per_1k: 0.06 })].into()
}

impl Default for ClientSettings {
    fn default() -> Self {
        ClientSettings {
            endpoint: default_endpoint(),
            model: default_model(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            api_key_env: default_api_key_env(),
            cache_dir: default_cache_dir(),
            max_in_flight: default_max_in_flight(),
            retry: RetryPolicy::default(),
            prices: default_prices(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    File,
    Subprocess,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSettings {
    pub name: String,
    pub kind: ScorerKind,
    /// Lookup file for `kind = "file"`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Command line for `kind = "subprocess"`.
    #[serde(default)]
    pub command: Vec<String>,
    /// Whether the pipeline must serialize access to this scorer.
    #[serde(default = "default_true")]
    pub serializes_access: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Subset of corpora languages to run; all of them when omitted.
    #[serde(default)]
    pub languages: Option<Vec<LanguageId>>,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<Protocol>,
    /// Demonstrations per five-shot prompt.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Metric names: `chrf` is built in, anything else must name a
    /// configured plug-in scorer.
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default = "default_mode")]
    pub mode: TransportMode,
    #[serde(default)]
    pub chrf: ChrfParams,
    #[serde(default)]
    pub selection: SelectionParams,
    /// Render demonstrations most-similar-first inside the prompt.
    #[serde(default = "default_true")]
    pub most_similar_first: bool,
    #[serde(default)]
    pub client: ClientSettings,
    #[serde(default)]
    pub corpora: Vec<CorpusSource>,
    #[serde(default)]
    pub scorers: Vec<ScorerSettings>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/run")
}

fn default_protocols() -> Vec<Protocol> {
    Protocol::ALL.to_vec()
}

fn default_k() -> usize {
    5
}

fn default_metrics() -> Vec<String> {
    vec!["chrf".into()]
}

fn default_mode() -> TransportMode {
    TransportMode::Replay
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ConfigError::NotFound { path: path.display().to_string() }
            } else {
                ConfigError::Io { path: path.display().to_string(), source: e }
            }
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate(path)?;
        Ok(config)
    }

    fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            path: path.display().to_string(),
            message,
        };
        self.chrf
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if self.k == 0 {
            return Err(invalid("k must be >= 1".into()));
        }
        if self.protocols.is_empty() {
            return Err(invalid("protocols must not be empty".into()));
        }
        if self.client.retry.max_attempts == 0 {
            return Err(invalid("client.retry.max_attempts must be >= 1".into()));
        }
        for metric in &self.metrics {
            if metric != "chrf" && !self.scorers.iter().any(|s| &s.name == metric) {
                return Err(invalid(format!(
                    "metric '{metric}' has no configured scorer"
                )));
            }
        }
        for scorer in &self.scorers {
            match scorer.kind {
                ScorerKind::File if scorer.path.is_none() => {
                    return Err(invalid(format!("scorer '{}' needs a path", scorer.name)))
                }
                ScorerKind::Subprocess if scorer.command.is_empty() => {
                    return Err(invalid(format!("scorer '{}' needs a command", scorer.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Corpora restricted to the configured language subset, in file order.
    pub fn active_corpora(&self) -> Vec<&CorpusSource> {
        self.corpora
            .iter()
            .filter(|c| match &self.languages {
                Some(langs) => langs.contains(&c.language),
                None => true,
            })
            .collect()
    }
}
