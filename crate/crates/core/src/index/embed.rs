//! Embedding providers.
//!
//! [`HashEmbedder`] is a deterministic feature-hashing provider used for
//! offline operation and tests. [`RemoteEmbedder`] speaks the
//! OpenAI-compatible `/embeddings` protocol for a hosted sentence encoder.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chunk::Chunk;
use super::tokenize::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed text with zero tokens")]
    ZeroTokens,
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider returned dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("provider returned a zero vector")]
    ZeroVector,
    #[error("provider request failed: {0}")]
    Provider(String),
    #[error("embedding batch [{start}, {end}) failed after {attempts} attempts: {source}")]
    Batch {
        start: usize,
        end: usize,
        attempts: usize,
        #[source]
        source: Box<EmbedError>,
    },
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// One vector per input, in order. Need not be normalized.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChunk {
    pub chunk: Chunk,
    pub vector: Vec<f32>,
}

pub fn l2_normalize(v: &mut [f32]) -> Result<(), EmbedError> {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::ZeroVector);
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(())
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signed feature hashing of lowercased tokens into `dimension` buckets,
/// L2-normalized. Bucket and sign come from the first eight bytes of the
/// token's SHA-256 read big-endian: bucket = h mod dimension, sign = top bit.
pub fn hash_embed(text: &str, dimension: usize) -> Result<Vec<f32>, EmbedError> {
    assert!(dimension > 0, "dimension must be positive");
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(EmbedError::ZeroTokens);
    }
    let mut v = vec![0f32; dimension];
    for t in tokens {
        let digest = Sha256::digest(t.to_lowercase().as_bytes());
        let h = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        let bucket = (h % dimension as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    // opposite-signed collisions can cancel every bucket
    l2_normalize(&mut v)?;
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashEmbedder { dimension }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts.iter().map(|t| hash_embed(t, self.dimension)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub max_retries: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions { batch_size: 32, max_retries: 2 }
    }
}

/// Embeds `texts` in batches, retrying each batch, and returns unit vectors.
pub fn embed_texts(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
    opts: EmbedOptions,
) -> Result<Vec<Vec<f32>>, EmbedError> {
    let batch = opts.batch_size.max(1);
    let mut out = Vec::with_capacity(texts.len());
    for (b, slice) in texts.chunks(batch).enumerate() {
        let start = b * batch;
        let end = start + slice.len();
        let mut attempt = 0;
        let vectors = loop {
            attempt += 1;
            match provider.embed(slice).and_then(|vs| check_batch(vs, slice.len(), provider.dimension())) {
                Ok(vs) => break vs,
                // deterministic failures are not worth retrying
                Err(e @ (EmbedError::ZeroTokens | EmbedError::ZeroVector)) => {
                    return Err(EmbedError::Batch { start, end, attempts: attempt, source: Box::new(e) })
                }
                Err(e) if attempt > opts.max_retries => {
                    return Err(EmbedError::Batch { start, end, attempts: attempt, source: Box::new(e) })
                }
                Err(e) => tracing::warn!(start, end, attempt, error = %e, "embedding batch failed, retrying"),
            }
        };
        out.extend(vectors);
    }
    Ok(out)
}

fn check_batch(mut vs: Vec<Vec<f32>>, expected: usize, dim: usize) -> Result<Vec<Vec<f32>>, EmbedError> {
    if vs.len() != expected {
        return Err(EmbedError::CountMismatch { expected, got: vs.len() });
    }
    for v in &mut vs {
        if v.len() != dim {
            return Err(EmbedError::Dimension { expected: dim, got: v.len() });
        }
        l2_normalize(v)?;
    }
    Ok(vs)
}

pub fn embed_chunks(
    chunks: &[Chunk],
    provider: &dyn EmbeddingProvider,
    opts: EmbedOptions,
) -> Result<Vec<EmbeddedChunk>, EmbedError> {
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embed_texts(&texts, provider, opts)?;
    Ok(chunks
        .iter()
        .cloned()
        .zip(vectors)
        .map(|(chunk, vector)| EmbeddedChunk { chunk, vector })
        .collect())
}

/// Client for an OpenAI-compatible `POST {endpoint}/embeddings` service.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    dimension: usize,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("dimension", &self.dimension)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        dimension: usize,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, EmbedError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Provider(e.to_string()))?;
        Ok(RemoteEmbedder {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            dimension,
            api_key,
            http,
        })
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut req = self
            .http
            .post(format!("{}/embeddings", self.endpoint))
            .json(&EmbeddingRequest { model: &self.model, input: texts });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::Provider(e.without_url().to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(EmbedError::Provider(format!("status {status}")));
        }
        let body: EmbeddingResponse =
            resp.json().map_err(|e| EmbedError::Provider(e.to_string()))?;
        let mut data = body.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}
