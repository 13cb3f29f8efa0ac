//! Canonical corpus types, text normalization and content hashing.
//!
//! A corpus file is UTF-8 JSON-Lines: one [`Document`] per line, using the
//! field names `source_url`, `title`, `content`, `metadata` and `sections`.
//! `metadata.content_hash` is an extension field carrying the SHA-256 of the
//! normalized content.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

/// Recommended `content_type` tags. Unknown tags are accepted.
pub const RECOMMENDED_CONTENT_TYPES: &[&str] = &[
    "academic_program",
    "admissions",
    "faq",
    "policy",
    "student_services",
    "research",
    "news",
    "event",
    "general",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub source_url: String,
    pub title: String,
    pub content: String,
    pub metadata: DocumentMetadata,
    #[serde(default)]
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    pub collection_date: NaiveDate,
    pub content_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_modified: Option<NaiveDate>,
    #[serde(default)]
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    #[serde(default)]
    pub heading: String,
    #[serde(default)]
    pub content: String,
}

/// Corpus-level reporting figures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_pages: usize,
    pub total_documents: usize,
    pub total_tokens: usize,
    pub pair_count: usize,
    pub mean_response_tokens: f64,
    pub median_response_tokens: f64,
}

impl Document {
    /// Builds a document whose `content` and `content_hash` are derived from
    /// its sections.
    pub fn from_sections(
        source_url: impl Into<String>,
        title: impl Into<String>,
        collection_date: NaiveDate,
        content_type: impl Into<String>,
        sections: Vec<Section>,
    ) -> Self {
        let content = join_sections(&sections);
        let content_hash = content_hash(&content);
        Document {
            source_url: source_url.into(),
            title: title.into(),
            content,
            metadata: DocumentMetadata {
                collection_date,
                content_type: content_type.into(),
                last_modified: None,
                content_hash,
            },
            sections,
        }
    }

    /// Re-normalizes title, content and sections and recomputes the hash.
    pub fn normalized(mut self) -> Self {
        self.title = normalize_text(&self.title);
        self.content = normalize_text(&self.content);
        for s in &mut self.sections {
            s.heading = normalize_text(&s.heading);
            s.content = normalize_text(&s.content);
        }
        self.sections.retain(|s| !s.heading.is_empty() || !s.content.is_empty());
        self.metadata.content_hash = content_hash(&self.content);
        self
    }
}

/// Normalized concatenation of `heading content` over all sections.
pub fn join_sections(sections: &[Section]) -> String {
    let mut raw = String::new();
    for s in sections {
        raw.push_str(&s.heading);
        raw.push(' ');
        raw.push_str(&s.content);
        raw.push(' ');
    }
    normalize_text(&raw)
}

fn map_punctuation(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => "\"",
        '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}' => {
            "-"
        }
        '\u{00AB}' | '\u{00BB}' => "\"",
        '\u{2039}' | '\u{203A}' => "'",
        // zero-width characters vanish
        '\u{200B}' | '\u{200C}' | '\u{200D}' | '\u{2060}' | '\u{FEFF}' => "",
        _ => return None,
    })
}

/// Collapses whitespace, trims, applies NFC and maps typographic punctuation
/// to ASCII. Idempotent.
pub fn normalize_text(raw: &str) -> String {
    let mut mapped = String::with_capacity(raw.len());
    for c in raw.chars() {
        match map_punctuation(c) {
            Some(rep) => mapped.push_str(rep),
            None => mapped.push(c),
        }
    }
    // composition runs after mapping so removed zero-width characters
    // cannot leave an uncomposed sequence behind
    let composed: String = mapped.nfc().collect();
    let mut out = String::with_capacity(composed.len());
    for word in composed.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Lowercase hex SHA-256 of already-normalized text.
pub fn content_hash(normalized: &str) -> String {
    hex::encode(Sha256::digest(normalized.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonAbsoluteUrl { url: String },
    UnsupportedScheme { scheme: String },
    EmptyContent,
    DateOrdering { last_modified: NaiveDate, collection_date: NaiveDate },
    EmptySection { index: usize },
    SectionsMismatch,
    HashMismatch { expected: String, found: String },
    EmptyContentType,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonAbsoluteUrl { url } => write!(f, "source_url {url:?} is not an absolute URL"),
            Violation::UnsupportedScheme { scheme } => write!(f, "source_url scheme {scheme:?} is not http(s)"),
            Violation::EmptyContent => f.write_str("content is empty after normalization"),
            Violation::DateOrdering { last_modified, collection_date } => {
                write!(f, "last_modified {last_modified} is after collection_date {collection_date}")
            }
            Violation::EmptySection { index } => write!(f, "section {index} has neither heading nor content"),
            Violation::SectionsMismatch => f.write_str("sections do not reconstruct content"),
            Violation::HashMismatch { .. } => f.write_str("content_hash does not match normalized content"),
            Violation::EmptyContentType => f.write_str("content_type is empty"),
        }
    }
}

/// Returns every violated document invariant; an empty list means valid.
pub fn validate_document(doc: &Document) -> Vec<Violation> {
    let mut out = Vec::new();
    match url::Url::parse(&doc.source_url) {
        Ok(u) if u.scheme() == "http" || u.scheme() == "https" => {}
        Ok(u) => out.push(Violation::UnsupportedScheme { scheme: u.scheme().to_string() }),
        Err(_) => out.push(Violation::NonAbsoluteUrl { url: doc.source_url.clone() }),
    }
    let normalized = normalize_text(&doc.content);
    if normalized.is_empty() {
        out.push(Violation::EmptyContent);
    }
    if let Some(lm) = doc.metadata.last_modified {
        if lm > doc.metadata.collection_date {
            out.push(Violation::DateOrdering {
                last_modified: lm,
                collection_date: doc.metadata.collection_date,
            });
        }
    }
    if doc.metadata.content_type.trim().is_empty() {
        out.push(Violation::EmptyContentType);
    }
    for (index, s) in doc.sections.iter().enumerate() {
        if s.heading.trim().is_empty() && s.content.trim().is_empty() {
            out.push(Violation::EmptySection { index });
        }
    }
    if !doc.sections.is_empty() && join_sections(&doc.sections) != normalized {
        out.push(Violation::SectionsMismatch);
    }
    let expected = content_hash(&normalized);
    if doc.metadata.content_hash != expected {
        out.push(Violation::HashMismatch { expected, found: doc.metadata.content_hash.clone() });
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed document: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Reads a JSON-Lines corpus. Blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>, CorpusIoError> {
    let io_err = |source| CorpusIoError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io_err)?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line).map_err(|source| CorpusIoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<(), CorpusIoError> {
    let io_err = |source| CorpusIoError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for d in docs {
        serde_json::to_writer(&mut w, d).expect("documents always serialize");
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
