//! FAQ detection: `Q:`/`A:` prefixes, question headings, and question
//! sentences inside a "frequently asked questions" section.

use std::sync::LazyLock;

use regex::Regex;

use super::{InstructionPair, Strategy};
use crate::corpus::{Document, Section};

static Q_MARK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|\s)Q\s*:\s*").unwrap());
static A_MARK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\sA\s*:\s*").unwrap());
static FAQ_HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)frequently asked questions|\bfaqs?\b").unwrap());
static SENTENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^.?!]+[.?!]*").unwrap());

/// `Q: ... A: ...` pairs in order. Section text is whitespace-normalized,
/// so markers are found mid-line as well as at line starts.
pub fn prefixed_pairs(text: &str) -> Vec<(String, String)> {
    let starts: Vec<(usize, usize)> = Q_MARK.find_iter(text).map(|m| (m.start(), m.end())).collect();
    let mut out = Vec::new();
    for (i, &(_, body_start)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map(|s| s.0).unwrap_or(text.len());
        let segment = &text[body_start..end];
        let Some(a) = A_MARK.find(segment) else { continue };
        let q = segment[..a.start()].trim();
        let ans = segment[a.end()..].trim();
        if !q.is_empty() && !ans.is_empty() {
            out.push((q.to_string(), ans.to_string()));
        }
    }
    out
}

/// Splits prose into question sentences and the text following each.
pub fn question_runs(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut current: Option<(String, String)> = None;
    for m in SENTENCE.find_iter(text) {
        let s = m.as_str().trim();
        if s.is_empty() {
            continue;
        }
        if s.ends_with('?') {
            if let Some(c) = current.take() {
                out.push(c);
            }
            current = Some((s.to_string(), String::new()));
        } else if let Some((_, a)) = current.as_mut() {
            if !a.is_empty() {
                a.push(' ');
            }
            a.push_str(s);
        }
    }
    out.extend(current);
    out.retain(|(_, a)| !a.is_empty());
    out
}

fn section_pairs(s: &Section) -> Vec<(String, String)> {
    let prefixed = prefixed_pairs(&s.content);
    if !prefixed.is_empty() {
        return prefixed;
    }
    let heading = s.heading.trim();
    if heading.ends_with('?') && !s.content.trim().is_empty() {
        return vec![(heading.to_string(), s.content.trim().to_string())];
    }
    if FAQ_HEADING.is_match(heading) {
        return question_runs(&s.content);
    }
    Vec::new()
}

pub fn extract_faq_pairs(doc: &Document) -> Vec<InstructionPair> {
    let sections: Vec<Section> = if doc.sections.is_empty() {
        vec![Section { heading: String::new(), content: doc.content.clone() }]
    } else {
        doc.sections.clone()
    };
    let mut out: Vec<InstructionPair> = Vec::new();
    for s in &sections {
        for (q, a) in section_pairs(s) {
            let pair = InstructionPair::new(q, a, &doc.source_url, Strategy::Faq, None);
            if !out.iter().any(|p| p.instruction == pair.instruction && p.response == pair.response) {
                out.push(pair);
            }
        }
    }
    out
}
