//! Configuration, component wiring, the interaction log and the HTTP API.

pub mod api;
pub mod config;
pub mod log;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

pub use api::{router, AppState};
pub use config::{load_config, process_env, Config, ConfigError, ResolvedEndpoints, Secret};
pub use log::{InteractionLog, InteractionRecord, RequestIds};

use crate::corpus::{read_corpus, CorpusStats};
use crate::dataset::{compute_corpus_stats, load_jsonl};
use crate::generation::{Generator, HttpLlmClient, LlmClient, RetryPolicy};
use crate::index::embed::RemoteEmbedder;
use crate::index::{EmbedOptions, EmbeddingProvider, HashEmbedder, IndexError, IndexPaths, IndexSet};
use crate::retrieval::{RemoteReranker, RerankerKind, Retriever};

use config::EmbeddingProviderKind;

/// Failures while assembling components, before any request is served.
#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("index {name} not found (expected {name}.chunks.jsonl, .vec.idx and .bm25.idx); run `index build` first")]
    IndexMissing { name: String },
    #[error("cannot load index {name}: {source}")]
    Index { name: String, source: IndexError },
    #[error("embedding provider produces {provider}-dimensional vectors but the index holds {index}")]
    DimensionMismatch { provider: usize, index: usize },
    #[error("{0}")]
    Component(String),
    #[error("cannot open interaction log {path}: {source}")]
    Log { path: String, source: std::io::Error },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

impl StartupError {
    /// 2 for configuration problems, 3 for missing or unusable resources.
    pub fn exit_code(&self) -> i32 {
        match self {
            StartupError::Config(_) | StartupError::Component(_) => 2,
            _ => 3,
        }
    }
}

pub fn embed_options(config: &Config) -> EmbedOptions {
    EmbedOptions { batch_size: config.embedding.batch_size, max_retries: config.embedding.max_retries }
}

/// The configured embedding provider. A remote provider uses a blocking HTTP
/// client, so call this outside of an async runtime.
pub fn build_provider(config: &Config, endpoints: &ResolvedEndpoints) -> Result<Arc<dyn EmbeddingProvider>, StartupError> {
    let dim = config.index.dimension;
    match config.embedding.provider {
        EmbeddingProviderKind::Hash => Ok(Arc::new(HashEmbedder::new(dim))),
        EmbeddingProviderKind::Remote => {
            let endpoint = endpoints.embedding_endpoint.clone().ok_or_else(|| {
                StartupError::Component(format!(
                    "embedding.provider is remote but no endpoint is set (embedding.endpoint or ${})",
                    config.embedding.endpoint_env
                ))
            })?;
            let e = RemoteEmbedder::new(
                endpoint,
                config.embedding.model.clone(),
                dim,
                endpoints.embedding_api_key.as_ref().map(|k| k.expose().to_string()),
                Duration::from_secs_f64(config.embedding.timeout_secs),
            )
            .map_err(|e| StartupError::Component(e.to_string()))?;
            Ok(Arc::new(e))
        }
    }
}

pub fn load_index(name: &Path) -> Result<IndexSet, StartupError> {
    let shown = name.display().to_string();
    if !IndexPaths::new(name).all_exist() {
        return Err(StartupError::IndexMissing { name: shown });
    }
    IndexSet::load(name).map_err(|source| StartupError::Index { name: shown, source })
}

/// Loads the index at `index_name` and wires the retriever the config asks for.
pub fn build_retriever(
    config: &Config,
    endpoints: &ResolvedEndpoints,
    index_name: &Path,
) -> Result<Retriever, StartupError> {
    let indexes = load_index(index_name)?;
    let provider = build_provider(config, endpoints)?;
    let index_dim = indexes.dense.params().dimension;
    if !indexes.dense.is_empty() && provider.dimension() != index_dim {
        return Err(StartupError::DimensionMismatch { provider: provider.dimension(), index: index_dim });
    }
    let mut retriever = Retriever::new(Arc::new(indexes), provider, config.retrieval.clone());
    if config.retrieval.reranker == RerankerKind::Remote {
        let endpoint = endpoints.reranker_endpoint.clone().ok_or_else(|| {
            StartupError::Component(format!(
                "retrieval.reranker is remote but no endpoint is set (reranker.endpoint or ${})",
                config.reranker.endpoint_env
            ))
        })?;
        let r = RemoteReranker::new(endpoint, Duration::from_secs_f64(config.reranker.timeout_secs))
            .map_err(|e| StartupError::Component(e.to_string()))?;
        retriever = retriever.with_reranker(Arc::new(r));
    }
    Ok(retriever)
}

pub fn build_llm(config: &Config, endpoints: &ResolvedEndpoints) -> Result<Arc<dyn LlmClient>, StartupError> {
    let endpoint = endpoints.llm_endpoint.clone().ok_or_else(|| {
        StartupError::Component(format!("no LLM endpoint is set (llm.endpoint or ${})", config.llm.endpoint_env))
    })?;
    let client = HttpLlmClient::new(
        endpoint,
        endpoints.llm_model.clone(),
        endpoints.llm_api_key.as_ref().map(|k| k.expose().to_string()),
        config.llm.dialect,
        config.llm.max_in_flight,
    )
    .map_err(|e| StartupError::Component(e.to_string()))?;
    Ok(Arc::new(client))
}

pub fn build_generator(config: &Config, client: Arc<dyn LlmClient>) -> Generator {
    let mut g = Generator::new(client, config.generation.clone(), config.persona.clone());
    g.format = config.prompt_format;
    g.retry = RetryPolicy {
        max_retries: config.llm.max_retries,
        backoff: Duration::from_millis(config.llm.retry_backoff_ms),
    };
    g
}

/// Figures for `/v1/stats` from the configured corpus and pairs files.
pub fn load_stats(config: &Config) -> Result<CorpusStats, StartupError> {
    let corpus = match &config.service.corpus {
        Some(p) => read_corpus(p).map_err(|e| StartupError::Component(e.to_string()))?,
        None => Vec::new(),
    };
    let pairs = match &config.service.pairs {
        Some(p) => load_jsonl(p).map_err(|e| StartupError::Component(e.to_string()))?,
        None => Vec::new(),
    };
    Ok(compute_corpus_stats(&corpus, &pairs))
}

/// Everything `serve` needs, built synchronously so that blocking HTTP
/// clients are created outside the runtime.
pub fn build_state(
    config: &Config,
    endpoints: &ResolvedEndpoints,
    llm: Option<Arc<dyn LlmClient>>,
) -> Result<AppState, StartupError> {
    let retriever = build_retriever(config, endpoints, &config.service.index)?;
    let client = match llm {
        Some(c) => c,
        None => build_llm(config, endpoints)?,
    };
    let generator = build_generator(config, client);
    let stats = load_stats(config)?;
    let log = match &config.service.request_log {
        Some(p) => InteractionLog::open(p).map_err(|source| StartupError::Log { path: p.display().to_string(), source })?,
        None => InteractionLog::disabled(),
    };
    Ok(AppState::new(retriever, generator, log, stats))
}

/// Binds and serves until Ctrl-C. `ready` receives the bound address.
pub fn serve(state: AppState, bind: &str, port: u16, ready: impl FnOnce(std::net::SocketAddr)) -> Result<(), StartupError> {
    let state = Arc::new(state);
    let rt = tokio::runtime::Runtime::new().map_err(|e| StartupError::Component(e.to_string()))?;
    let addr = format!("{bind}:{port}");
    let app_state = state.clone();
    let result = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|source| StartupError::Bind { addr: addr.clone(), source })?;
        let local = listener.local_addr().map_err(|source| StartupError::Bind { addr: addr.clone(), source })?;
        tracing::info!(%local, chunks = app_state.retriever.indexes.len(), "serving");
        ready(local);
        let log = app_state.log.clone();
        axum::serve(listener, router(app_state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await
            .map_err(|source| StartupError::Bind { addr, source })?;
        log.flush().await;
        Ok(())
    });
    drop(rt);
    drop(state);
    result
}
