use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::analyze;

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("reranker unreachable: {0}")]
    Unreachable(String),
    #[error("reranker returned {got} scores for {expected} candidates")]
    CountMismatch { expected: usize, got: usize },
}

pub trait Reranker: Send + Sync {
    fn name(&self) -> &str;
    /// One score per text, higher is better.
    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError>;
}

/// `|q ∩ c| / |q|` over analyzed term sets.
#[derive(Debug, Default, Clone, Copy)]
pub struct LexicalOverlap;

pub fn overlap_ratio(query: &str, text: &str) -> f64 {
    let q: HashSet<String> = analyze(query).into_iter().collect();
    if q.is_empty() {
        return 0.0;
    }
    let c: HashSet<String> = analyze(text).into_iter().collect();
    q.intersection(&c).count() as f64 / q.len() as f64
}

impl Reranker for LexicalOverlap {
    fn name(&self) -> &str {
        "lexical-overlap"
    }

    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        Ok(texts.iter().map(|t| overlap_ratio(query, t)).collect())
    }
}

/// Constant scores; with a stable sort this keeps the fused order.
#[derive(Debug, Default, Clone, Copy)]
pub struct Passthrough;

impl Reranker for Passthrough {
    fn name(&self) -> &str {
        "none"
    }

    fn score(&self, _query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        Ok(vec![0.0; texts.len()])
    }
}

/// Cross-encoder served over HTTP: `POST {endpoint}/rerank` with
/// `{"query": .., "texts": [..]}` answering `[{"index": i, "score": s}, ..]`.
pub struct RemoteReranker {
    endpoint: String,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RerankHit {
    index: usize,
    score: f64,
}

impl RemoteReranker {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, RerankError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RerankError::Unreachable(e.to_string()))?;
        Ok(RemoteReranker { endpoint: endpoint.into().trim_end_matches('/').to_string(), http })
    }
}

impl Reranker for RemoteReranker {
    fn name(&self) -> &str {
        "remote-cross-encoder"
    }

    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RerankError> {
        let resp = self
            .http
            .post(format!("{}/rerank", self.endpoint))
            .json(&RerankRequest { query, texts })
            .send()
            .map_err(|e| RerankError::Unreachable(e.without_url().to_string()))?;
        if !resp.status().is_success() {
            return Err(RerankError::Unreachable(format!("status {}", resp.status())));
        }
        let hits: Vec<RerankHit> = resp.json().map_err(|e| RerankError::Unreachable(e.to_string()))?;
        let mut scores = vec![f64::NAN; texts.len()];
        for h in &hits {
            if h.index < scores.len() {
                scores[h.index] = h.score;
            }
        }
        if hits.len() != texts.len() || scores.iter().any(|s| s.is_nan()) {
            return Err(RerankError::CountMismatch { expected: texts.len(), got: hits.len() });
        }
        Ok(scores)
    }
}

/// Reorders `items` by score, descending and stable. Returns the scores in
/// the new order.
pub fn stable_rerank<T>(items: Vec<T>, scores: Vec<f64>) -> Vec<(T, f64)> {
    let mut zipped: Vec<(T, f64)> = items.into_iter().zip(scores).collect();
    zipped.sort_by(|a, b| b.1.total_cmp(&a.1));
    zipped
}
