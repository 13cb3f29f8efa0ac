//! Crawling, extraction, quality filtering, PII screening and deduplication.

pub mod crawl;
pub mod dedup;
pub mod extract;
pub mod pii;
pub mod quality;
pub mod robots;
pub mod transport;

use std::path::Path;

use chrono::{NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

pub use crawl::{crawl, write_raw_dir, CrawlConfig, CrawlError, CrawlOutput, CrawlReport, Outcome, RawPage, UrlOutcome};
pub use dedup::deduplicate;
pub use extract::{extract_content, extract_document, ExtractError};
pub use pii::{detect_pii, PiiDetector, PiiFlag, PiiKind};
pub use quality::{assess_quality, QualityReason, QualityVerdict};
pub use robots::Robots;
pub use transport::{FixtureManifest, FixtureTransport, HttpTransport, Transport};

use crate::corpus::{validate_document, Document};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub min_tokens: usize,
    /// Refuse documents carrying PII flags instead of only reporting them.
    pub strict_pii: bool,
    pub id_patterns: Vec<String>,
    pub near_duplicates: bool,
    pub near_duplicate_threshold: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            min_tokens: 30,
            strict_pii: false,
            id_patterns: Vec::new(),
            near_duplicates: false,
            near_duplicate_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestConfigError {
    #[error("ingest.near_duplicate_threshold = {0} is out of range (0 < x <= 1)")]
    Threshold(f64),
    #[error("ingest.id_patterns: {0}")]
    Pattern(String),
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestConfigError> {
        let t = self.near_duplicate_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(IngestConfigError::Threshold(t));
        }
        PiiDetector::new(&self.id_patterns).map_err(|e| IngestConfigError::Pattern(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageIssue {
    pub url: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityRejection {
    pub url: String,
    pub reasons: Vec<QualityReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiReport {
    pub url: String,
    pub flags: Vec<PiiFlag>,
    pub blocked: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub pages_read: usize,
    pub documents_admitted: usize,
    pub extract_errors: Vec<PageIssue>,
    pub quality_rejections: Vec<QualityRejection>,
    pub pii: Vec<PiiReport>,
    pub duplicates_dropped: usize,
}

/// extract -> quality -> PII -> dedup over pages in order.
pub fn ingest_pages(pages: &[RawPage], config: &IngestConfig) -> Result<(Vec<Document>, IngestReport), IngestConfigError> {
    config.validate()?;
    let detector = PiiDetector::new(&config.id_patterns).map_err(|e| IngestConfigError::Pattern(e.to_string()))?;
    let mut report = IngestReport { pages_read: pages.len(), ..Default::default() };
    let mut docs = Vec::new();
    for page in pages {
        let doc = match extract_content(page) {
            Ok(d) => d,
            Err(e) => {
                report.extract_errors.push(PageIssue { url: page.url.clone(), detail: e.to_string() });
                continue;
            }
        };
        debug_assert!(validate_document(&doc).is_empty());
        let verdict = assess_quality(&doc, config.min_tokens);
        if !verdict.accepted {
            report.quality_rejections.push(QualityRejection { url: page.url.clone(), reasons: verdict.reasons });
            continue;
        }
        let flags = detector.detect(&doc.content);
        if !flags.is_empty() {
            let blocked = config.strict_pii;
            tracing::warn!(url = %page.url, flags = flags.len(), blocked, "possible PII, flagged for review");
            report.pii.push(PiiReport { url: page.url.clone(), flags, blocked });
            if blocked {
                continue;
            }
        }
        docs.push(doc);
    }
    let threshold = config.near_duplicates.then_some(config.near_duplicate_threshold);
    let (kept, dropped) = deduplicate(docs, threshold);
    report.duplicates_dropped = dropped;
    report.documents_admitted = kept.len();
    Ok((kept, report))
}

/// Reads a fixture-format directory (a crawl output or hand-made fixtures).
/// `/robots.txt` entries and non-2xx entries are skipped; entries without a
/// fetch date get `default_date`.
pub fn read_raw_dir(dir: &Path, default_date: NaiveDate) -> std::io::Result<Vec<RawPage>> {
    let manifest = FixtureManifest::read(dir)?;
    let mut out = Vec::new();
    for e in manifest.pages {
        let is_robots = url::Url::parse(&e.url).map(|u| u.path() == "/robots.txt").unwrap_or(false);
        if is_robots || !(200..300).contains(&e.status) {
            continue;
        }
        let body = std::fs::read(dir.join(&e.file))?;
        let date = e.fetch_date.unwrap_or(default_date);
        out.push(RawPage {
            url: e.url,
            http_status: e.status,
            content_type: e.content_type,
            body,
            fetch_timestamp: date.and_time(NaiveTime::MIN).and_utc(),
            last_modified: e.last_modified.as_deref().and_then(crawl::parse_http_date),
        });
    }
    Ok(out)
}

pub fn today() -> NaiveDate {
    Utc::now().date_naive()
}
