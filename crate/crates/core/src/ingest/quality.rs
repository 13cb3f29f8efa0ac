use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::index::token_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityReason {
    TooShort,
    ErrorPage,
    Placeholder,
    LowTextRatio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub accepted: bool,
    pub reasons: Vec<QualityReason>,
}

pub const MIN_TEXT_RATIO: f64 = 0.5;

/// Placeholder phrases other than lorem ipsum only count on short pages.
const PLACEHOLDER_MAX_TOKENS: usize = 100;

static ERROR_TITLE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:400|401|403|404|410|500|502|503)\b|page not found|not found|access denied|forbidden|server error|page (?:does not|doesn't) exist",
    )
    .unwrap()
});
static ERROR_BODY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:404|error 404|404 error)\b.{0,20}not found|page not found|page (?:does not|doesn't) exist|access denied|internal server error").unwrap()
});
static LOREM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)lorem ipsum").unwrap());
static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)coming soon|under construction|content to be added|placeholder").unwrap());

/// Alphanumeric characters over non-whitespace characters; 1.0 for empty text.
pub fn text_ratio(text: &str) -> f64 {
    let (mut alnum, mut visible) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        visible += 1;
        if c.is_alphanumeric() {
            alnum += 1;
        }
    }
    if visible == 0 {
        1.0
    } else {
        alnum as f64 / visible as f64
    }
}

fn head(text: &str, chars: usize) -> &str {
    match text.char_indices().nth(chars) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

pub fn assess_quality(doc: &Document, min_tokens: usize) -> QualityVerdict {
    let mut reasons = Vec::new();
    let tokens = token_count(&doc.content);
    if tokens < min_tokens {
        reasons.push(QualityReason::TooShort);
    }
    if ERROR_TITLE.is_match(&doc.title) || ERROR_BODY.is_match(head(&doc.content, 200)) {
        reasons.push(QualityReason::ErrorPage);
    }
    if LOREM.is_match(&doc.content) || (tokens < PLACEHOLDER_MAX_TOKENS && PLACEHOLDER.is_match(&doc.content)) {
        reasons.push(QualityReason::Placeholder);
    }
    if text_ratio(&doc.content) < MIN_TEXT_RATIO {
        reasons.push(QualityReason::LowTextRatio);
    }
    QualityVerdict { accepted: reasons.is_empty(), reasons }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Section;
    use chrono::NaiveDate;

    fn doc(title: &str, content: &str) -> Document {
        let d = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        Document::from_sections("https://u.edu/x", title, d, "general", vec![Section { heading: String::new(), content: content.into() }])
    }

    #[test]
    fn too_short() {
        let v = assess_quality(&doc("Hours", "Open nine to five daily."), 30);
        assert_eq!(v, QualityVerdict { accepted: false, reasons: vec![QualityReason::TooShort] });
    }

    #[test]
    fn error_title() {
        let v = assess_quality(&doc("404 Page Not Found", &"word ".repeat(50)), 30);
        assert_eq!(v.reasons, vec![QualityReason::ErrorPage]);
    }

    #[test]
    fn long_prose_accepted() {
        let v = assess_quality(&doc("Advising", &"Students meet their advisor each term. ".repeat(80)), 30);
        assert!(v.accepted, "{v:?}");
    }

    #[test]
    fn placeholder_and_ratio() {
        let v = assess_quality(&doc("New", "Lorem ipsum dolor sit amet."), 1);
        assert_eq!(v.reasons, vec![QualityReason::Placeholder]);
        let v = assess_quality(&doc("Sym", "| | | -- == ** a"), 1);
        assert_eq!(v.reasons, vec![QualityReason::LowTextRatio]);
    }
}
