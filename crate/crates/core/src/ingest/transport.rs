//! Page fetching. [`HttpTransport`] goes to the network; [`FixtureTransport`]
//! serves a directory of saved pages and records every call.
//!
//! A fixture directory holds `manifest.json`:
//!
//! ```json
//! {"pages": [{"url": "https://x.edu/", "file": "index.html", "status": 200,
//!             "content_type": "text/html"}]}
//! ```
//!
//! URLs missing from the manifest answer 404.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::time::Instant;
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    /// URL after same-host redirects.
    pub final_url: Url,
    pub status: u16,
    pub content_type: Option<String>,
    pub last_modified: Option<String>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("fetching {url} failed: {reason}")]
pub struct FetchError {
    pub url: String,
    pub reason: String,
}

#[async_trait]
pub trait Transport: Send + Sync {
    async fn fetch(&self, url: &Url, user_agent: &str) -> Result<FetchResponse, FetchError>;
}

pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, FetchError> {
        let policy = reqwest::redirect::Policy::custom(|attempt| {
            let same_host = attempt.previous().first().map(|u| u.host_str()) == Some(attempt.url().host_str());
            if attempt.previous().len() >= 5 || !same_host {
                attempt.stop()
            } else {
                attempt.follow()
            }
        });
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .redirect(policy)
            .build()
            .map_err(|e| FetchError { url: String::new(), reason: e.to_string() })?;
        Ok(HttpTransport { client })
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn fetch(&self, url: &Url, user_agent: &str) -> Result<FetchResponse, FetchError> {
        let err = |e: reqwest::Error| FetchError { url: url.to_string(), reason: e.without_url().to_string() };
        let resp = self
            .client
            .get(url.clone())
            .header(reqwest::header::USER_AGENT, user_agent)
            .send()
            .await
            .map_err(err)?;
        let header = |name: reqwest::header::HeaderName| {
            resp.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_owned)
        };
        let content_type = header(reqwest::header::CONTENT_TYPE);
        let last_modified = header(reqwest::header::LAST_MODIFIED);
        let final_url = resp.url().clone();
        let status = resp.status().as_u16();
        let body = if resp.status().is_success() { resp.bytes().await.map_err(err)?.to_vec() } else { Vec::new() };
        Ok(FetchResponse { final_url, status, content_type, last_modified, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub url: String,
    pub file: String,
    #[serde(default = "default_status")]
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_modified: Option<String>,
    /// Date the page was fetched; readers fall back to the current date.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetch_date: Option<chrono::NaiveDate>,
}

fn default_status() -> u16 {
    200
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub pages: Vec<FixtureEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl FixtureManifest {
    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone)]
pub struct CallRecord {
    pub url: String,
    pub host: String,
    pub at: Instant,
}

pub struct FixtureTransport {
    dir: PathBuf,
    pages: HashMap<String, FixtureEntry>,
    log: Mutex<Vec<CallRecord>>,
    /// Simulated latency per fetch.
    pub latency: Duration,
}

impl FixtureTransport {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        let manifest = FixtureManifest::read(dir)?;
        let pages = manifest.pages.into_iter().map(|p| (p.url.clone(), p)).collect();
        Ok(FixtureTransport { dir: dir.to_path_buf(), pages, log: Mutex::default(), latency: Duration::ZERO })
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.lock().expect("call log").clone()
    }
}

#[async_trait]
impl Transport for FixtureTransport {
    async fn fetch(&self, url: &Url, _user_agent: &str) -> Result<FetchResponse, FetchError> {
        self.log.lock().expect("call log").push(CallRecord {
            url: url.to_string(),
            host: url.host_str().unwrap_or("").to_string(),
            at: Instant::now(),
        });
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let Some(entry) = self.pages.get(url.as_str()) else {
            return Ok(FetchResponse {
                final_url: url.clone(),
                status: 404,
                content_type: None,
                last_modified: None,
                body: Vec::new(),
            });
        };
        let body = if (200..300).contains(&entry.status) {
            std::fs::read(self.dir.join(&entry.file))
                .map_err(|e| FetchError { url: url.to_string(), reason: e.to_string() })?
        } else {
            Vec::new()
        };
        Ok(FetchResponse {
            final_url: url.clone(),
            status: entry.status,
            content_type: entry.content_type.clone(),
            last_modified: entry.last_modified.clone(),
            body,
        })
    }
}
