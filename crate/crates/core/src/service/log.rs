//! Append-only JSON-Lines interaction log, written off the request path.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::{mpsc, oneshot};

use crate::retrieval::{ScoredChunk, StageTimings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEntry {
    pub chunk_id: String,
    pub dense_score: Option<f64>,
    pub sparse_score: Option<f64>,
    pub fused_score: f64,
    pub rerank_score: Option<f64>,
    pub final_rank: usize,
}

impl From<&ScoredChunk> for RetrievedEntry {
    fn from(s: &ScoredChunk) -> Self {
        RetrievedEntry {
            chunk_id: s.chunk_id.clone(),
            dense_score: s.dense_score,
            sparse_score: s.sparse_score,
            fused_score: s.fused_score,
            rerank_score: s.rerank_score,
            final_rank: s.final_rank,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    #[serde(flatten)]
    pub retrieval: StageTimings,
    pub generate_ms: f64,
    pub request_ms: f64,
}

/// One line of the log. Prompt and answer are stored as hashes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub timestamp: DateTime<Utc>,
    pub request_id: String,
    pub endpoint: String,
    pub query: String,
    pub retrieved: Vec<RetrievedEntry>,
    pub prompt_hash: Option<String>,
    pub answer_hash: Option<String>,
    pub latency: Latency,
    pub model_name: Option<String>,
    /// `ok` or the error code returned to the client.
    pub status: String,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

enum Msg {
    Record(Box<InteractionRecord>),
    Flush(oneshot::Sender<()>),
}

/// Handle to the writer thread; cheap to clone.
#[derive(Clone)]
pub struct InteractionLog {
    tx: Option<mpsc::Sender<Msg>>,
    path: Option<PathBuf>,
}

const QUEUE_DEPTH: usize = 1024;

impl InteractionLog {
    /// A log that drops every record.
    pub fn disabled() -> Self {
        InteractionLog { tx: None, path: None }
    }

    /// Starts the writer thread. The file is opened for append up front so
    /// that an unwritable path fails here rather than per request.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let (tx, mut rx) = mpsc::channel::<Msg>(QUEUE_DEPTH);
        let shown = path.display().to_string();
        std::thread::Builder::new().name("interaction-log".into()).spawn(move || {
            while let Some(msg) = rx.blocking_recv() {
                match msg {
                    Msg::Record(rec) => {
                        let mut line = serde_json::to_string(&rec).expect("record serializes");
                        line.push('\n');
                        if let Err(e) = file.write_all(line.as_bytes()).and_then(|_| file.flush()) {
                            eprintln!("warning: cannot write interaction log {shown}: {e}");
                        }
                    }
                    Msg::Flush(done) => {
                        let _ = done.send(());
                    }
                }
            }
        })?;
        Ok(InteractionLog { tx: Some(tx), path: Some(path.to_path_buf()) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub async fn record(&self, rec: InteractionRecord) {
        if let Some(tx) = &self.tx {
            if tx.send(Msg::Record(Box::new(rec))).await.is_err() {
                eprintln!("warning: interaction log writer has stopped");
            }
        }
    }

    /// Resolves once every record sent before this call is on disk.
    pub async fn flush(&self) {
        if let Some(tx) = &self.tx {
            let (done, wait) = oneshot::channel();
            if tx.send(Msg::Flush(done)).await.is_ok() {
                let _ = wait.await;
            }
        }
    }
}

/// `{process start in ms, hex}-{counter}`: unique within and across runs.
pub struct RequestIds {
    prefix: String,
    next: AtomicU64,
}

impl Default for RequestIds {
    fn default() -> Self {
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        RequestIds { prefix: format!("{ms:x}"), next: AtomicU64::new(1) }
    }
}

impl RequestIds {
    pub fn next_id(&self) -> String {
        format!("{}-{:06}", self.prefix, self.next.fetch_add(1, Ordering::Relaxed))
    }
}
