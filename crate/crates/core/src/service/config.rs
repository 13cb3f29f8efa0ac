//! YAML configuration with strict keys, documented defaults and range checks.
//!
//! Secrets never live in the file: `*_env` keys name environment variables
//! that are read at load time.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::generation::{Dialect, GenerationParams, PersonaConfig, PromptFormat};
use crate::index::{Bm25Params, ChunkParams, IndexParams};
use crate::ingest::{CrawlConfig, IngestConfig};
use crate::retrieval::RetrievalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    /// Built-in feature-hashing embedder; deterministic and offline.
    #[default]
    Hash,
    /// OpenAI-compatible `/embeddings` endpoint.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingProviderKind,
    pub endpoint: Option<String>,
    pub endpoint_env: String,
    pub model: String,
    pub api_key_env: String,
    pub batch_size: usize,
    pub max_retries: usize,
    pub timeout_secs: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbeddingProviderKind::Hash,
            endpoint: None,
            endpoint_env: "EMBEDDING_ENDPOINT".into(),
            model: "all-MiniLM-L6-v2".into(),
            api_key_env: "EMBEDDING_API_KEY".into(),
            batch_size: 32,
            max_retries: 2,
            timeout_secs: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankerConfig {
    /// Base URL of a cross-encoder service; used when `retrieval.reranker` is `remote`.
    pub endpoint: Option<String>,
    pub endpoint_env: String,
    pub timeout_secs: f64,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        RerankerConfig { endpoint: None, endpoint_env: "RERANKER_ENDPOINT".into(), timeout_secs: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    /// Base URL; `{endpoint}/chat/completions` is called. Overridden by `endpoint_env` when set.
    pub endpoint: Option<String>,
    pub endpoint_env: String,
    pub api_key_env: String,
    pub model: Option<String>,
    pub model_env: String,
    pub dialect: Dialect,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: None,
            endpoint_env: "LLM_ENDPOINT".into(),
            api_key_env: "LLM_API_KEY".into(),
            model: None,
            model_env: "LLM_MODEL".into(),
            dialect: Dialect::Extended,
            max_retries: 2,
            retry_backoff_ms: 250,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    /// Interaction log (JSON-Lines). `null` disables it.
    pub request_log: Option<PathBuf>,
    /// Index name as passed to `index build --out`.
    pub index: PathBuf,
    /// Corpus and pairs files feeding `/v1/stats`.
    pub corpus: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            request_log: Some(PathBuf::from("interactions.jsonl")),
            index: PathBuf::from("index/campus"),
            corpus: None,
            pairs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub crawl: CrawlConfig,
    pub ingest: IngestConfig,
    pub chunk: ChunkParams,
    pub index: IndexParams,
    pub bm25: Bm25Params,
    pub retrieval: RetrievalParams,
    pub generation: GenerationParams,
    pub persona: PersonaConfig,
    pub prompt_format: PromptFormat,
    pub embedding: EmbeddingConfig,
    pub reranker: RerankerConfig,
    pub llm: LlmConfig,
    pub service: ServiceConfig,
}

/// A secret string whose `Debug` and `Display` never show the value.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }
    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

/// Endpoint settings after environment lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedEndpoints {
    pub llm_endpoint: Option<String>,
    pub llm_model: String,
    pub llm_api_key: Option<Secret>,
    pub embedding_endpoint: Option<String>,
    pub embedding_api_key: Option<Secret>,
    pub reranker_endpoint: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    Missing(String),
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed YAML in {path}: {message}")]
    Yaml { path: String, message: String },
    #[error("unknown key in {path}: {message}")]
    UnknownKey { path: String, message: String },
    #[error("invalid value: {0}")]
    Invalid(String),
}

fn range(field: &str, value: f64, ok: bool, bound: &str) -> Result<(), ConfigError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{field} = {value} is out of range ({bound})")))
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        self.crawl.validate().map_err(|e| inv(&e))?;
        self.ingest.validate().map_err(|e| inv(&e))?;
        self.chunk.validate().map_err(|e| inv(&e))?;
        self.index.validate().map_err(|e| inv(&e))?;
        range("bm25.k1", self.bm25.k1, self.bm25.k1 >= 0.0, "x >= 0")?;
        range("bm25.b", self.bm25.b, (0.0..=1.0).contains(&self.bm25.b), "0 <= x <= 1")?;
        self.retrieval.validate().map_err(|e| inv(&e))?;
        self.generation.validate().map_err(|e| inv(&e))?;
        let budget = self.persona.context_budget_tokens;
        range("persona.context_budget_tokens", budget as f64, budget > 0, "x > 0")?;
        let e = &self.embedding;
        range("embedding.batch_size", e.batch_size as f64, e.batch_size > 0, "x > 0")?;
        range("embedding.timeout_secs", e.timeout_secs, e.timeout_secs > 0.0, "x > 0")?;
        range("reranker.timeout_secs", self.reranker.timeout_secs, self.reranker.timeout_secs > 0.0, "x > 0")?;
        let m = self.llm.max_in_flight;
        range("llm.max_in_flight", m as f64, m > 0, "x > 0")?;
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let config: Config = if text.trim().is_empty() {
            Config::default()
        } else {
            serde_yaml::from_str(text).map_err(|e| {
                let message = e.to_string();
                if message.contains("unknown field") {
                    ConfigError::UnknownKey { path: origin.to_string(), message }
                } else {
                    ConfigError::Yaml { path: origin.to_string(), message }
                }
            })?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config always serializes")
    }

    /// Endpoint URLs, model name and API keys from the environment lookup
    /// `env`; environment values take precedence over file values.
    pub fn resolve_endpoints(&self, env: &dyn Fn(&str) -> Option<String>) -> ResolvedEndpoints {
        let lookup = |name: &str| if name.is_empty() { None } else { env(name).filter(|v| !v.trim().is_empty()) };
        ResolvedEndpoints {
            llm_endpoint: lookup(&self.llm.endpoint_env).or_else(|| self.llm.endpoint.clone()),
            llm_model: lookup(&self.llm.model_env)
                .or_else(|| self.llm.model.clone())
                .unwrap_or_else(|| "default".to_string()),
            llm_api_key: lookup(&self.llm.api_key_env).map(Secret),
            embedding_endpoint: lookup(&self.embedding.endpoint_env).or_else(|| self.embedding.endpoint.clone()),
            embedding_api_key: lookup(&self.embedding.api_key_env).map(Secret),
            reranker_endpoint: lookup(&self.reranker.endpoint_env).or_else(|| self.reranker.endpoint.clone()),
        }
    }
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ConfigError::Missing(p.clone())
        } else {
            ConfigError::Io { path: p.clone(), source }
        }
    })?;
    Config::parse(&text, &p)
}

pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok()
}
