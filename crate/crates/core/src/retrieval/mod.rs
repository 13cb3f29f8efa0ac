//! Hybrid retrieval: expand -> embed -> dense + sparse -> fuse -> rerank -> diversify.

pub mod expand;
pub mod fusion;
pub mod rerank;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use expand::{expand_query, expand_with, ExpandedQuery, QueryExpander};
pub use fusion::{fuse, fuse_many, Fused, DEFAULT_RRF_CONSTANT};
pub use rerank::{LexicalOverlap, Passthrough, RemoteReranker, RerankError, Reranker};

use crate::analysis::{analyze, content_words, stem};
use crate::corpus::normalize_text;
use crate::index::embed::{l2_normalize, EmbedError};
use crate::index::{DimensionMismatch, DocRef, EmbeddingProvider, IndexSet, SparseIndex, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    Rrf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankerKind {
    Lexical,
    None,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankFallback {
    /// Keep the fused order when the reranker fails.
    FusedOrder,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalParams {
    pub k_final: usize,
    pub k_candidates: usize,
    pub fusion: FusionMethod,
    pub rrf_constant: f64,
    pub max_chunks_per_doc: usize,
    pub expansion: bool,
    pub reranker: RerankerKind,
    pub rerank_fallback: RerankFallback,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            k_final: 3,
            k_candidates: 20,
            fusion: FusionMethod::Rrf,
            rrf_constant: DEFAULT_RRF_CONSTANT,
            max_chunks_per_doc: 2,
            expansion: true,
            reranker: RerankerKind::Lexical,
            rerank_fallback: RerankFallback::FusedOrder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalParamsError {
    #[error("retrieval.k_final must be at least 1")]
    ZeroKFinal,
    #[error("retrieval.k_final ({k_final}) must not exceed retrieval.k_candidates ({k_candidates})")]
    KFinalAboveCandidates { k_final: usize, k_candidates: usize },
    #[error("retrieval.max_chunks_per_doc must be at least 1")]
    ZeroPerDoc,
    #[error("retrieval.rrf_constant must be non-negative and finite")]
    BadConstant,
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<(), RetrievalParamsError> {
        if self.k_final == 0 {
            return Err(RetrievalParamsError::ZeroKFinal);
        }
        if self.k_final > self.k_candidates {
            return Err(RetrievalParamsError::KFinalAboveCandidates {
                k_final: self.k_final,
                k_candidates: self.k_candidates,
            });
        }
        if self.max_chunks_per_doc == 0 {
            return Err(RetrievalParamsError::ZeroPerDoc);
        }
        if !(self.rrf_constant.is_finite() && self.rrf_constant >= 0.0) {
            return Err(RetrievalParamsError::BadConstant);
        }
        Ok(())
    }
}

/// Per-stage scores for one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: String,
    pub dense_score: Option<f64>,
    pub sparse_score: Option<f64>,
    pub fused_score: f64,
    pub rerank_score: Option<f64>,
    pub final_rank: usize,
}

impl ScoredChunk {
    fn bare(chunk_id: &str, score: f64) -> Self {
        ScoredChunk {
            chunk_id: chunk_id.to_string(),
            dense_score: None,
            sparse_score: None,
            fused_score: score,
            rerank_score: None,
            final_rank: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    #[serde(flatten)]
    pub scores: ScoredChunk,
    pub text: String,
    pub doc_ref: DocRef,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub expand_ms: f64,
    pub embed_ms: f64,
    pub dense_ms: f64,
    pub sparse_ms: f64,
    pub fuse_ms: f64,
    pub rerank_ms: f64,
    pub diversify_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub expanded_terms: Vec<String>,
    pub contexts: Vec<Context>,
    /// Every fused candidate in post-rerank order.
    pub candidates: Vec<ScoredChunk>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Query,
    Embed,
    Dense,
    Sparse,
    Rerank,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("embedding the query failed: {0}")]
    Embed(#[source] EmbedError),
    #[error("dense search failed: {0}")]
    Dense(#[from] DimensionMismatch),
    #[error("reranking failed: {0}")]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Params(#[from] RetrievalParamsError),
}

impl RetrievalError {
    pub fn stage(&self) -> Stage {
        match self {
            RetrievalError::EmptyQuery | RetrievalError::Params(_) => Stage::Query,
            RetrievalError::Embed(_) => Stage::Embed,
            RetrievalError::Dense(_) => Stage::Dense,
            RetrievalError::Rerank(_) => Stage::Rerank,
        }
    }
}

/// Cosine top-k as scored chunks.
pub fn dense_search(index: &VectorIndex, query_vector: &[f32], k: usize) -> Result<Vec<ScoredChunk>, DimensionMismatch> {
    Ok(index
        .search(query_vector, k)?
        .into_iter()
        .enumerate()
        .map(|(i, (id, s))| ScoredChunk {
            dense_score: Some(s as f64),
            final_rank: i + 1,
            ..ScoredChunk::bare(id, 0.0)
        })
        .collect())
}

/// BM25 top-k. Terms pass through the index analyzer's stemmer and are
/// deduplicated; chunks matching no term are excluded.
pub fn sparse_search(index: &SparseIndex, terms: &[String], k: usize) -> Vec<ScoredChunk> {
    let mut analyzed: Vec<String> = terms.iter().map(|t| stem(&t.to_lowercase())).collect();
    analyzed.sort();
    analyzed.dedup();
    index
        .search(&analyzed, k)
        .into_iter()
        .enumerate()
        .map(|(i, (id, s))| ScoredChunk { sparse_score: Some(s), final_rank: i + 1, ..ScoredChunk::bare(id, 0.0) })
        .collect()
}

/// Greedy scan keeping at most `max_per_doc` chunks per key, stopping at `k_final`.
pub fn diversify<T, K: std::hash::Hash + Eq>(
    candidates: Vec<T>,
    doc_of: impl Fn(&T) -> K,
    max_per_doc: usize,
    k_final: usize,
) -> Vec<T> {
    let mut per_doc: HashMap<K, usize> = HashMap::new();
    let mut out = Vec::new();
    for c in candidates {
        if out.len() >= k_final {
            break;
        }
        let n = per_doc.entry(doc_of(&c)).or_default();
        if *n < max_per_doc {
            *n += 1;
            out.push(c);
        }
    }
    out
}

/// BM25 input for a query: its unstemmed content words plus any terms an
/// expander added. Expanded stems are left out because [`sparse_search`]
/// stems again and the stemmer is not idempotent ("meetings" -> "meeting"
/// -> "meet").
fn sparse_terms(normalized: &str, expanded: &ExpandedQuery) -> Vec<String> {
    let mut words = content_words(normalized);
    if words.is_empty() {
        return expanded.terms.clone();
    }
    let base = expand_query(normalized).terms;
    for t in &expanded.terms {
        if !base.contains(t) && !words.contains(t) {
            words.push(t.clone());
        }
    }
    words
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// Reentrant retrieval over read-only indexes.
#[derive(Clone)]
pub struct Retriever {
    pub indexes: Arc<IndexSet>,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub reranker: Arc<dyn Reranker>,
    pub expander: Option<Arc<dyn QueryExpander>>,
    pub params: RetrievalParams,
}

impl Retriever {
    pub fn new(indexes: Arc<IndexSet>, provider: Arc<dyn EmbeddingProvider>, params: RetrievalParams) -> Self {
        let reranker: Arc<dyn Reranker> = match params.reranker {
            RerankerKind::None => Arc::new(Passthrough),
            _ => Arc::new(LexicalOverlap),
        };
        Retriever { indexes, provider, reranker, expander: None, params }
    }

    pub fn with_reranker(mut self, reranker: Arc<dyn Reranker>) -> Self {
        self.reranker = reranker;
        self
    }

    pub fn retrieve(&self, query: &str) -> Result<RetrievalResult, RetrievalError> {
        self.retrieve_with(query, &self.params)
    }

    pub fn retrieve_with(&self, query: &str, params: &RetrievalParams) -> Result<RetrievalResult, RetrievalError> {
        params.validate()?;
        let started = Instant::now();
        let mut timings = StageTimings::default();
        let normalized = normalize_text(query);
        if normalized.is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }

        let t = Instant::now();
        let expanded = if params.expansion {
            expand_with(&normalized, self.expander.as_deref())
        } else {
            let terms = analyze(&normalized);
            if terms.is_empty() {
                expand_query(&normalized)
            } else {
                ExpandedQuery { terms, fallback: false }
            }
        };
        timings.expand_ms = ms(t);

        let idx = &self.indexes;
        let mut dense = Vec::new();
        if !idx.dense.is_empty() {
            let t = Instant::now();
            let embedded = self
                .provider
                .embed(std::slice::from_ref(&normalized))
                .and_then(|mut v| v.pop().ok_or(EmbedError::CountMismatch { expected: 1, got: 0 }))
                .and_then(|mut qv| l2_normalize(&mut qv).map(|()| qv));
            timings.embed_ms = ms(t);
            let qv = match embedded {
                Ok(qv) => Some(qv),
                // Nothing to compare by direction; the query still has terms.
                Err(EmbedError::ZeroVector | EmbedError::ZeroTokens) => {
                    tracing::debug!("query has no usable embedding, dense stage skipped");
                    None
                }
                Err(e) => return Err(RetrievalError::Embed(e)),
            };
            if let Some(qv) = qv {
                let t = Instant::now();
                dense = dense_search(&idx.dense, &qv, params.k_candidates)?;
                timings.dense_ms = ms(t);
            }
        }
        let t = Instant::now();
        let sparse = sparse_search(&idx.sparse, &sparse_terms(&normalized, &expanded), params.k_candidates);
        timings.sparse_ms = ms(t);

        let t = Instant::now();
        let dense_ids: Vec<&str> = dense.iter().map(|s| s.chunk_id.as_str()).collect();
        let sparse_ids: Vec<&str> = sparse.iter().map(|s| s.chunk_id.as_str()).collect();
        let dense_by: HashMap<&str, f64> = dense.iter().filter_map(|s| Some((s.chunk_id.as_str(), s.dense_score?))).collect();
        let sparse_by: HashMap<&str, f64> =
            sparse.iter().filter_map(|s| Some((s.chunk_id.as_str(), s.sparse_score?))).collect();
        let fused: Vec<ScoredChunk> = fuse(&dense_ids, &sparse_ids, params.rrf_constant)
            .into_iter()
            .map(|f| ScoredChunk {
                dense_score: dense_by.get(f.id.as_str()).copied(),
                sparse_score: sparse_by.get(f.id.as_str()).copied(),
                ..ScoredChunk::bare(&f.id, f.score)
            })
            .collect();
        timings.fuse_ms = ms(t);

        let t = Instant::now();
        let texts: Vec<&str> = fused
            .iter()
            .map(|s| idx.get(&s.chunk_id).map(|c| c.text.as_str()).unwrap_or(""))
            .collect();
        let mut reranked = match self.reranker.score(&normalized, &texts) {
            Ok(scores) => rerank::stable_rerank(fused, scores)
                .into_iter()
                .map(|(mut s, score)| {
                    s.rerank_score = Some(score);
                    s
                })
                .collect(),
            Err(e) if params.rerank_fallback == RerankFallback::FusedOrder => {
                tracing::warn!(reranker = self.reranker.name(), error = %e, "reranker failed, keeping fused order");
                fused
            }
            Err(e) => return Err(e.into()),
        };
        for (i, s) in reranked.iter_mut().enumerate() {
            s.final_rank = i + 1;
        }
        timings.rerank_ms = ms(t);

        let t = Instant::now();
        let source_of = |s: &ScoredChunk| idx.get(&s.chunk_id).map(|c| c.doc_ref.source_url.clone()).unwrap_or_default();
        let kept = diversify(reranked.clone(), source_of, params.max_chunks_per_doc, params.k_final);
        let contexts: Vec<Context> = kept
            .into_iter()
            .enumerate()
            .filter_map(|(i, mut s)| {
                let chunk = idx.get(&s.chunk_id)?;
                s.final_rank = i + 1;
                Some(Context { scores: s, text: chunk.text.clone(), doc_ref: chunk.doc_ref.clone() })
            })
            .collect();
        timings.diversify_ms = ms(t);
        timings.total_ms = ms(started);

        Ok(RetrievalResult {
            query: query.to_string(),
            expanded_terms: expanded.terms,
            contexts,
            candidates: reranked,
            timings,
        })
    }
}
