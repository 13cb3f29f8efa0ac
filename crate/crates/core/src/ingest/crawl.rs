//! Breadth-first crawler with robots.txt compliance and per-host politeness.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::OnceCell;
use tokio::time::Instant;
use url::Url;

use super::extract::{sniff_kind, BodyKind};
use super::robots::Robots;
use super::transport::{FetchResponse, FixtureEntry, FixtureManifest, Transport, MANIFEST_FILE};

/// Crawl-delay values above this are clamped.
pub const MAX_CRAWL_DELAY: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrawlConfig {
    pub seed_urls: Vec<Url>,
    pub allowed_hosts: Vec<String>,
    pub max_depth: u32,
    pub max_pages: usize,
    pub per_host_delay_secs: f64,
    pub max_parallel_fetches: usize,
    pub user_agent: String,
    pub request_timeout_secs: f64,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            seed_urls: Vec::new(),
            allowed_hosts: Vec::new(),
            max_depth: 3,
            max_pages: 500,
            per_host_delay_secs: 1.0,
            max_parallel_fetches: 4,
            user_agent: concat!("campus-rag/", env!("CARGO_PKG_VERSION")).to_string(),
            request_timeout_secs: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrawlConfigError {
    #[error("crawl.seed_urls: {0} is not an http(s) URL with a host")]
    BadSeed(String),
    #[error("crawl.seed_urls: host of {0} is not in crawl.allowed_hosts")]
    SeedHostNotAllowed(String),
    #[error("crawl.{field} = {value} is out of range ({bound})")]
    Range { field: &'static str, value: f64, bound: &'static str },
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<(), CrawlConfigError> {
        for seed in &self.seed_urls {
            if !matches!(seed.scheme(), "http" | "https") || seed.host_str().is_none() {
                return Err(CrawlConfigError::BadSeed(seed.to_string()));
            }
            if !self.host_allowed(seed) {
                return Err(CrawlConfigError::SeedHostNotAllowed(seed.to_string()));
            }
        }
        let range = |field, value: f64, ok: bool, bound| {
            if ok {
                Ok(())
            } else {
                Err(CrawlConfigError::Range { field, value, bound })
            }
        };
        let d = self.per_host_delay_secs;
        range("per_host_delay_secs", d, d.is_finite() && d >= 0.0, "x >= 0")?;
        range("max_pages", self.max_pages as f64, self.max_pages >= 1, "x >= 1")?;
        let p = self.max_parallel_fetches;
        range("max_parallel_fetches", p as f64, p >= 1, "x >= 1")?;
        let t = self.request_timeout_secs;
        range("request_timeout_secs", t, t.is_finite() && t > 0.0, "x > 0")?;
        Ok(())
    }

    pub fn host_allowed(&self, url: &Url) -> bool {
        let Some(host) = url.host_str() else { return false };
        self.allowed_hosts.iter().any(|h| h.eq_ignore_ascii_case(host))
    }

    pub fn per_host_delay(&self) -> Duration {
        Duration::from_secs_f64(self.per_host_delay_secs.max(0.0))
    }
}

/// A fetched page. `body` is kept only for 2xx responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPage {
    pub url: String,
    pub http_status: u16,
    pub content_type: Option<String>,
    #[serde(skip)]
    pub body: Vec<u8>,
    pub fetch_timestamp: DateTime<Utc>,
    pub last_modified: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Fetched { status: u16, duplicate: bool },
    SkippedRobots,
    Failed { status: Option<u16>, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlOutcome {
    pub url: String,
    pub depth: u32,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub pages_fetched: usize,
    pub pages_skipped_robots: usize,
    pub pages_failed: usize,
    /// Fetched pages whose body repeated an earlier page byte for byte.
    pub duplicates_dropped: usize,
    pub outcomes: Vec<UrlOutcome>,
}

impl CrawlReport {
    pub fn attempted(&self) -> usize {
        self.outcomes.len()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CrawlError {
    #[error(transparent)]
    Config(#[from] CrawlConfigError),
    #[error("no seed URLs configured")]
    NoSeeds,
    #[error("every seed was unreachable: {0}")]
    SeedsUnreachable(String),
}

/// Canonical form used for the visited set: fragment removed.
pub fn canonical_url(url: &Url) -> Url {
    let mut u = url.clone();
    u.set_fragment(None);
    u
}

fn host_key(url: &Url) -> String {
    format!("{}:{}", url.host_str().unwrap_or(""), url.port_or_known_default().unwrap_or(0))
}

/// Parses an HTTP-date or ISO-8601 date.
pub fn parse_http_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    DateTime::parse_from_rfc2822(s)
        .map(|d| d.date_naive())
        .or_else(|_| DateTime::parse_from_rfc3339(s).map(|d| d.date_naive()))
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d"))
        .ok()
}

/// Absolute, same-scheme-family links of an HTML page, fragments removed,
/// in document order without repeats.
pub fn extract_links(base: &Url, html: &str) -> Vec<Url> {
    let doc = scraper::Html::parse_document(html);
    let base_sel = scraper::Selector::parse("base[href]").expect("selector");
    let base = doc
        .select(&base_sel)
        .next()
        .and_then(|b| b.value().attr("href"))
        .and_then(|h| base.join(h).ok())
        .unwrap_or_else(|| base.clone());
    let sel = scraper::Selector::parse("a[href]").expect("selector");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for a in doc.select(&sel) {
        let Some(href) = a.value().attr("href") else { continue };
        let Ok(u) = base.join(href.trim()) else { continue };
        if !matches!(u.scheme(), "http" | "https") {
            continue;
        }
        let u = canonical_url(&u);
        if seen.insert(u.to_string()) {
            out.push(u);
        }
    }
    out
}

struct HostState {
    robots: OnceCell<Arc<Robots>>,
    /// End of the most recent request to this host.
    gate: tokio::sync::Mutex<Option<Instant>>,
}

struct Session<'a> {
    config: &'a CrawlConfig,
    transport: &'a dyn Transport,
    hosts: Mutex<HashMap<String, Arc<HostState>>>,
}

enum Fetched {
    Page(FetchResponse),
    Robots,
    Error(String),
}

impl<'a> Session<'a> {
    fn host(&self, url: &Url) -> Arc<HostState> {
        let mut hosts = self.hosts.lock().expect("host table");
        hosts
            .entry(host_key(url))
            .or_insert_with(|| {
                Arc::new(HostState { robots: OnceCell::new(), gate: tokio::sync::Mutex::new(None) })
            })
            .clone()
    }

    /// Runs one request to `url`'s host no sooner than `delay` after the
    /// previous one finished.
    async fn gated(&self, host: &HostState, url: &Url, delay: Duration) -> Result<FetchResponse, String> {
        let mut last = host.gate.lock().await;
        if let Some(t) = *last {
            tokio::time::sleep_until(t + delay).await;
        }
        let r = self.transport.fetch(url, &self.config.user_agent).await;
        *last = Some(Instant::now());
        r.map_err(|e| e.reason)
    }

    async fn robots(&self, host: &HostState, url: &Url) -> Arc<Robots> {
        host.robots
            .get_or_init(|| async {
                let mut robots_url = url.clone();
                robots_url.set_path("/robots.txt");
                robots_url.set_query(None);
                robots_url.set_fragment(None);
                let robots = match self.gated(host, &robots_url, self.config.per_host_delay()).await {
                    Ok(r) if (200..300).contains(&r.status) => Robots::parse(&String::from_utf8_lossy(&r.body)),
                    Ok(r) if (400..500).contains(&r.status) => Robots::allow_all(),
                    Ok(r) => {
                        tracing::warn!(url = %robots_url, status = r.status, "robots.txt unavailable, allowing all");
                        Robots::allow_all()
                    }
                    Err(e) => {
                        tracing::warn!(url = %robots_url, error = %e, "robots.txt fetch failed, allowing all");
                        Robots::allow_all()
                    }
                };
                Arc::new(robots)
            })
            .await
            .clone()
    }

    async fn fetch(&self, url: &Url) -> Fetched {
        let host = self.host(url);
        let robots = self.robots(&host, url).await;
        let path = match url.query() {
            Some(q) => format!("{}?{q}", url.path()),
            None => url.path().to_string(),
        };
        if !robots.is_allowed(&self.config.user_agent, &path) {
            return Fetched::Robots;
        }
        let mut delay = self.config.per_host_delay();
        if let Some(cd) = robots.crawl_delay(&self.config.user_agent) {
            delay = delay.max(cd.min(MAX_CRAWL_DELAY));
        }
        match self.gated(&host, url, delay).await {
            Ok(r) => Fetched::Page(r),
            Err(e) => Fetched::Error(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrawlOutput {
    pub pages: Vec<RawPage>,
    pub report: CrawlReport,
}

/// Crawls depth by depth. Within a wave up to `max_parallel_fetches` requests
/// are in flight, but results are consumed in frontier order so the output
/// is deterministic for a deterministic transport.
pub async fn crawl(config: &CrawlConfig, transport: &dyn Transport) -> Result<CrawlOutput, CrawlError> {
    config.validate()?;
    if config.seed_urls.is_empty() {
        return Err(CrawlError::NoSeeds);
    }
    let session = Session { config, transport, hosts: Mutex::default() };
    let mut visited: HashSet<String> = HashSet::new();
    let mut frontier: Vec<Url> = Vec::new();
    for s in &config.seed_urls {
        let c = canonical_url(s);
        if visited.insert(c.to_string()) {
            frontier.push(c);
        }
    }

    let mut report = CrawlReport::default();
    let mut pages = Vec::new();
    let mut bodies: HashSet<[u8; 32]> = HashSet::new();
    let mut seed_failures = Vec::new();
    let mut seed_ok = false;

    for depth in 0..=config.max_depth {
        let budget = config.max_pages.saturating_sub(report.attempted());
        frontier.truncate(budget);
        if frontier.is_empty() {
            break;
        }
        let results: Vec<(Url, Fetched)> = stream::iter(frontier.drain(..))
            .map(|u| {
                let session = &session;
                async move {
                    let r = session.fetch(&u).await;
                    (u, r)
                }
            })
            .buffered(config.max_parallel_fetches)
            .collect()
            .await;

        let mut next = Vec::new();
        for (url, fetched) in results {
            let outcome = match fetched {
                Fetched::Robots => {
                    report.pages_skipped_robots += 1;
                    if depth == 0 {
                        seed_ok = true;
                    }
                    Outcome::SkippedRobots
                }
                Fetched::Error(reason) => {
                    report.pages_failed += 1;
                    if depth == 0 {
                        seed_failures.push(format!("{url}: {reason}"));
                    }
                    Outcome::Failed { status: None, reason }
                }
                Fetched::Page(r) if !(200..300).contains(&r.status) => {
                    report.pages_failed += 1;
                    if depth == 0 {
                        seed_failures.push(format!("{url}: status {}", r.status));
                    }
                    Outcome::Failed { status: Some(r.status), reason: format!("status {}", r.status) }
                }
                Fetched::Page(r) => {
                    report.pages_fetched += 1;
                    if depth == 0 {
                        seed_ok = true;
                    }
                    let final_url = canonical_url(&r.final_url);
                    visited.insert(final_url.to_string());
                    let duplicate = !bodies.insert(Sha256::digest(&r.body).into());
                    if duplicate {
                        report.duplicates_dropped += 1;
                    } else {
                        if depth < config.max_depth
                            && sniff_kind(r.content_type.as_deref(), &r.body) == Some(BodyKind::Html)
                        {
                            for link in extract_links(&final_url, &String::from_utf8_lossy(&r.body)) {
                                if config.host_allowed(&link) && visited.insert(link.to_string()) {
                                    next.push(link);
                                }
                            }
                        }
                        pages.push(RawPage {
                            url: final_url.to_string(),
                            http_status: r.status,
                            content_type: r.content_type.clone(),
                            last_modified: r.last_modified.as_deref().and_then(parse_http_date),
                            body: r.body,
                            fetch_timestamp: Utc::now(),
                        });
                    }
                    Outcome::Fetched { status: r.status, duplicate }
                }
            };
            tracing::info!(url = %url, depth, outcome = ?outcome, "crawl");
            report.outcomes.push(UrlOutcome { url: url.to_string(), depth, outcome });
        }
        frontier = next;
    }

    if !seed_ok {
        return Err(CrawlError::SeedsUnreachable(seed_failures.join("; ")));
    }
    Ok(CrawlOutput { pages, report })
}

/// Writes pages as a fixture-format directory readable by `ingest`.
pub fn write_raw_dir(dir: &Path, pages: &[RawPage]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = FixtureManifest::default();
    for (i, p) in pages.iter().enumerate() {
        let ext = match sniff_kind(p.content_type.as_deref(), &p.body) {
            Some(BodyKind::Text) => "txt",
            _ => "html",
        };
        let file = format!("page-{:05}.{ext}", i + 1);
        std::fs::write(dir.join(&file), &p.body)?;
        manifest.pages.push(FixtureEntry {
            url: p.url.clone(),
            file,
            status: p.http_status,
            content_type: p.content_type.clone(),
            last_modified: p.last_modified.map(|d| d.to_string()),
            fetch_date: Some(p.fetch_timestamp.date_naive()),
        });
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(MANIFEST_FILE), json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn links_resolve_and_drop_fragments() {
        let base = Url::parse("https://u.edu/a/b.html").unwrap();
        let html = r#"<a href="c.html#x">c</a><a href="/d">d</a><a href="mailto:x@u.edu">m</a><a href="c.html">again</a>"#;
        let links: Vec<String> = extract_links(&base, html).into_iter().map(|u| u.to_string()).collect();
        assert_eq!(links, vec!["https://u.edu/a/c.html", "https://u.edu/d"]);
    }

    #[test]
    fn http_dates() {
        let d = NaiveDate::from_ymd_opt(2024, 3, 5).unwrap();
        assert_eq!(parse_http_date("Tue, 05 Mar 2024 10:00:00 GMT"), Some(d));
        assert_eq!(parse_http_date("2024-03-05"), Some(d));
        assert_eq!(parse_http_date("soon"), None);
    }

    #[test]
    fn config_validation() {
        let mut c = CrawlConfig {
            seed_urls: vec![Url::parse("https://u.edu/").unwrap()],
            allowed_hosts: vec!["u.edu".into()],
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.allowed_hosts = vec!["other.edu".into()];
        assert!(matches!(c.validate(), Err(CrawlConfigError::SeedHostNotAllowed(_))));
        c.allowed_hosts = vec!["u.edu".into()];
        c.per_host_delay_secs = -1.0;
        assert!(c.validate().unwrap_err().to_string().contains("crawl.per_host_delay_secs"));
    }
}
