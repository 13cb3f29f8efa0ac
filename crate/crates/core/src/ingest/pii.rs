//! Pattern-based PII screening. Flags are advisory and never modify text.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiKind {
    Email,
    Phone,
    SsnLike,
    IdLike,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiiFlag {
    pub kind: PiiKind,
    /// Byte offsets into the screened text.
    pub start: usize,
    pub end: usize,
    pub excerpt: String,
}

static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}\b").unwrap());
static PHONE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\+?1[\s.-]?)?(?:\([2-9]\d{2}\)\s?|\b[2-9]\d{2}[\s.-]?)[2-9]\d{2}[\s.-]?\d{4}\b").unwrap()
});
static SSN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d{3}-\d{2}-\d{4}\b").unwrap());

/// Keeps the last two alphanumerics and punctuation; masks the rest.
pub fn redact(s: &str) -> String {
    let alnum = s.chars().filter(|c| c.is_alphanumeric()).count();
    let mut seen = 0;
    s.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                seen += 1;
                if seen + 2 > alnum {
                    c
                } else {
                    '*'
                }
            } else {
                c
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PiiDetector {
    id_patterns: Vec<Regex>,
}

impl PiiDetector {
    /// `id_patterns` are regexes for institution-specific identifiers.
    pub fn new(id_patterns: &[String]) -> Result<Self, regex::Error> {
        let id_patterns = id_patterns.iter().map(|p| Regex::new(p)).collect::<Result<_, _>>()?;
        Ok(PiiDetector { id_patterns })
    }

    pub fn detect(&self, text: &str) -> Vec<PiiFlag> {
        let mut flags = Vec::new();
        let mut push = |kind, m: regex::Match<'_>| {
            flags.push(PiiFlag { kind, start: m.start(), end: m.end(), excerpt: redact(m.as_str()) });
        };
        for m in EMAIL.find_iter(text) {
            push(PiiKind::Email, m);
        }
        for m in SSN.find_iter(text) {
            push(PiiKind::SsnLike, m);
        }
        for m in PHONE.find_iter(text) {
            push(PiiKind::Phone, m);
        }
        for re in &self.id_patterns {
            for m in re.find_iter(text) {
                push(PiiKind::IdLike, m);
            }
        }
        flags.sort_by_key(|f| (f.start, f.end));
        flags
    }
}

/// Detection with no institution-ID patterns.
pub fn detect_pii(text: &str) -> Vec<PiiFlag> {
    PiiDetector { id_patterns: Vec::new() }.detect(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<PiiKind> {
        detect_pii(text).into_iter().map(|f| f.kind).collect()
    }

    #[test]
    fn email() {
        let f = detect_pii("contact jdoe@tamusa.edu");
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, PiiKind::Email);
        assert_eq!(&"contact jdoe@tamusa.edu"[f[0].start..f[0].end], "jdoe@tamusa.edu");
        assert!(!f[0].excerpt.contains("jdoe"));
    }

    #[test]
    fn phone() {
        assert_eq!(kinds("call 210-555-0199"), vec![PiiKind::Phone]);
        assert_eq!(kinds("call (210) 555-0199 now"), vec![PiiKind::Phone]);
    }

    #[test]
    fn negatives() {
        assert!(kinds("Office hours MWF 2-3pm").is_empty());
        assert!(kinds("Room 2024, fall 2024-2025").is_empty());
    }

    #[test]
    fn ssn_is_not_a_phone() {
        assert_eq!(kinds("SSN 123-45-6789"), vec![PiiKind::SsnLike]);
    }

    #[test]
    fn configured_ids() {
        let d = PiiDetector::new(&[r"\bK\d{8}\b".to_string()]).unwrap();
        let f = d.detect("student K00123456 enrolled");
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, PiiKind::IdLike);
        assert_eq!(f[0].excerpt, "*******56");
    }
}
