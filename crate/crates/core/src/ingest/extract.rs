//! HTML and plain-text content extraction.
//!
//! Boilerplate removal is tag based: the elements in [`DROPPED_ELEMENTS`] and
//! anything with a navigation/banner/contentinfo role are skipped. When the
//! page has a `<main>` element only its subtree is read. Headings `h1`-`h6`
//! open new sections; tables are linearized with ` | ` between cells and
//! ` ; ` between rows.

use chrono::NaiveDate;
use ego_tree::NodeRef;
use scraper::{Html, Node, Selector};

use crate::corpus::{normalize_text, Document, Section};

pub const DROPPED_ELEMENTS: &[&str] = &[
    "script", "style", "nav", "footer", "header", "aside", "form", "noscript", "template", "iframe", "svg", "button",
    "select", "head",
];

const DROPPED_ROLES: &[&str] = &["navigation", "banner", "contentinfo", "search"];

const BLOCK_ELEMENTS: &[&str] = &[
    "address", "article", "blockquote", "br", "dd", "div", "dl", "dt", "figcaption", "figure", "hr", "li", "main",
    "ol", "p", "pre", "section", "td", "th", "tr", "ul", "body", "html",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyKind {
    Html,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("unsupported content type {0:?}")]
    UnsupportedFormat(String),
    #[error("no text left after extraction from {0}")]
    EmptyContent(String),
    #[error("page URL {0:?} is not an absolute http(s) URL")]
    BadUrl(String),
}

/// Body kind from the Content-Type header when present, else sniffed from
/// the first bytes. `None` means not a text format.
pub fn sniff_kind(content_type: Option<&str>, body: &[u8]) -> Option<BodyKind> {
    if let Some(ct) = content_type {
        let mime = ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
        if !mime.is_empty() {
            return match mime.as_str() {
                "text/html" | "application/xhtml+xml" => Some(BodyKind::Html),
                "text/plain" | "text/markdown" => Some(BodyKind::Text),
                _ => None,
            };
        }
    }
    let head = &body[..body.len().min(1024)];
    if head.contains(&0) {
        return None;
    }
    let text = String::from_utf8_lossy(head);
    if text.trim_start().starts_with('<') {
        Some(BodyKind::Html)
    } else {
        Some(BodyKind::Text)
    }
}

#[derive(Default)]
struct Builder {
    sections: Vec<Section>,
    heading: String,
    buf: String,
}

impl Builder {
    fn flush(&mut self) {
        let content = normalize_text(&self.buf);
        let heading = std::mem::take(&mut self.heading);
        if !heading.is_empty() || !content.is_empty() {
            self.sections.push(Section { heading, content });
        }
        self.buf.clear();
    }
}

fn is_dropped(e: &scraper::node::Element) -> bool {
    DROPPED_ELEMENTS.contains(&e.name())
        || e.attr("role").is_some_and(|r| DROPPED_ROLES.contains(&r.trim().to_ascii_lowercase().as_str()))
        || e.attr("hidden").is_some()
        || e.attr("aria-hidden") == Some("true")
}

fn is_heading(name: &str) -> bool {
    matches!(name, "h1" | "h2" | "h3" | "h4" | "h5" | "h6")
}

fn collect_text(node: NodeRef<'_, Node>, out: &mut String) {
    match node.value() {
        Node::Text(t) => out.push_str(t),
        Node::Element(e) => {
            if is_dropped(e) {
                return;
            }
            let block = BLOCK_ELEMENTS.contains(&e.name()) || is_heading(e.name());
            if block {
                out.push(' ');
            }
            for c in node.children() {
                collect_text(c, out);
            }
            if block {
                out.push(' ');
            }
        }
        _ => {}
    }
}

fn linearize_table(table: NodeRef<'_, Node>) -> String {
    let mut rows = Vec::new();
    for n in table.descendants() {
        let Node::Element(e) = n.value() else { continue };
        if e.name() != "tr" {
            continue;
        }
        let cells: Vec<String> = n
            .children()
            .filter(|c| matches!(c.value(), Node::Element(e) if e.name() == "td" || e.name() == "th"))
            .map(|c| {
                let mut s = String::new();
                collect_text(c, &mut s);
                normalize_text(&s)
            })
            .filter(|s| !s.is_empty())
            .collect();
        if !cells.is_empty() {
            rows.push(cells.join(" | "));
        }
    }
    rows.join(" ; ")
}

fn walk(node: NodeRef<'_, Node>, b: &mut Builder) {
    match node.value() {
        Node::Text(t) => b.buf.push_str(t),
        Node::Element(e) => {
            let name = e.name();
            if is_dropped(e) {
                return;
            }
            if is_heading(name) {
                b.flush();
                let mut h = String::new();
                collect_text(node, &mut h);
                b.heading = normalize_text(&h);
                return;
            }
            if name == "table" {
                b.buf.push(' ');
                b.buf.push_str(&linearize_table(node));
                b.buf.push(' ');
                return;
            }
            let block = BLOCK_ELEMENTS.contains(&name);
            if block {
                b.buf.push(' ');
            }
            for c in node.children() {
                walk(c, b);
            }
            if block {
                b.buf.push(' ');
            }
        }
        _ => {}
    }
}

/// Title and sections of an HTML document.
pub fn html_sections(html: &str) -> (Option<String>, Vec<Section>) {
    let doc = Html::parse_document(html);
    let title_sel = Selector::parse("title").expect("selector");
    let title = doc
        .select(&title_sel)
        .next()
        .map(|t| normalize_text(&t.text().collect::<String>()))
        .filter(|t| !t.is_empty());
    let main_sel = Selector::parse("main, [role=main]").expect("selector");
    let body_sel = Selector::parse("body").expect("selector");
    let root = doc.select(&main_sel).next().or_else(|| doc.select(&body_sel).next());
    let mut b = Builder::default();
    match root {
        Some(r) => walk(*r, &mut b),
        None => walk(doc.tree.root(), &mut b),
    }
    b.flush();
    (title, b.sections)
}

/// Heuristic `content_type` tag from the URL path and title.
pub fn classify_content_type(url: &url::Url, title: &str) -> &'static str {
    let hay = format!("{} {}", url.path(), title).to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| hay.contains(w));
    if has(&["faq", "frequently asked"]) {
        "faq"
    } else if has(&["admission", "apply", "application"]) {
        "admissions"
    } else if has(&["program", "degree", "major", "catalog", "curriculum"]) {
        "academic_program"
    } else if has(&["policy", "policies", "handbook", "regulation"]) {
        "policy"
    } else if has(&["news", "press"]) {
        "news"
    } else if has(&["event", "calendar"]) {
        "event"
    } else if has(&["research"]) {
        "research"
    } else if has(&["student", "housing", "financial-aid", "financial aid", "advising", "counsel", "career"]) {
        "student_services"
    } else {
        "general"
    }
}

fn path_title(url: &url::Url) -> String {
    let path = url.path().trim_matches('/');
    if path.is_empty() {
        url.host_str().unwrap_or("").to_string()
    } else {
        path.to_string()
    }
}

/// Builds a normalized, hashed [`Document`] from a fetched page.
/// `last_modified` later than `collection_date` is discarded.
pub fn extract_document(
    url: &str,
    content_type: Option<&str>,
    body: &[u8],
    collection_date: NaiveDate,
    last_modified: Option<NaiveDate>,
) -> Result<Document, ExtractError> {
    let parsed = url::Url::parse(url).map_err(|_| ExtractError::BadUrl(url.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(ExtractError::BadUrl(url.to_string()));
    }
    let kind = sniff_kind(content_type, body)
        .ok_or_else(|| ExtractError::UnsupportedFormat(content_type.unwrap_or("application/octet-stream").to_string()))?;
    let text = String::from_utf8_lossy(body);
    let (title, sections) = match kind {
        BodyKind::Html => html_sections(&text),
        BodyKind::Text => {
            let content = normalize_text(&text);
            let sections = if content.is_empty() { vec![] } else { vec![Section { heading: String::new(), content }] };
            (None, sections)
        }
    };
    let title = title
        .or_else(|| sections.iter().map(|s| s.heading.clone()).find(|h| !h.is_empty()))
        .unwrap_or_else(|| normalize_text(&path_title(&parsed)));
    let content_type = classify_content_type(&parsed, &title);
    let mut doc = Document::from_sections(parsed.as_str(), title, collection_date, content_type, sections);
    if doc.content.is_empty() {
        return Err(ExtractError::EmptyContent(url.to_string()));
    }
    doc.metadata.last_modified = last_modified.filter(|d| *d <= collection_date);
    Ok(doc)
}

/// [`extract_document`] over a crawled page; collection date is the fetch date.
pub fn extract_content(page: &super::RawPage) -> Result<Document, ExtractError> {
    extract_document(
        &page.url,
        page.content_type.as_deref(),
        &page.body,
        page.fetch_timestamp.date_naive(),
        page.last_modified,
    )
}
