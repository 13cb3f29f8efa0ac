//! Term analysis shared by the sparse index, query expansion and the
//! lexical reranker: lowercase, drop punctuation-only tokens and stopwords,
//! then apply a light suffix stemmer.

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::index::tokenize::tokenize;

/// Built-in English stopword list.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "please", "same",
    "she", "should", "so", "some", "such", "tell", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.iter().copied().collect())
}

pub fn is_stopword(term: &str) -> bool {
    stopword_set().contains(term)
}

/// Suffix rules, first match wins, applied once:
///
/// | suffix | replacement | min remaining stem |
/// |--------|-------------|--------------------|
/// | `ies`  | `y`         | 2                  |
/// | `sses` | `ss`        | 2                  |
/// | `ing`  | -           | 3                  |
/// | `ed`   | -           | 3                  |
/// | `s`    | - (not after `s`, `u`, `i`) | 3  |
pub fn stem(term: &str) -> String {
    const RULES: &[(&str, &str, usize)] = &[
        ("ies", "y", 2),
        ("sses", "ss", 2),
        ("ing", "", 3),
        ("ed", "", 3),
    ];
    for &(suffix, rep, min_stem) in RULES {
        if let Some(base) = term.strip_suffix(suffix) {
            if base.chars().count() >= min_stem {
                return format!("{base}{rep}");
            }
            return term.to_string();
        }
    }
    if let Some(base) = term.strip_suffix('s') {
        let keep = base.ends_with('s') || base.ends_with('u') || base.ends_with('i');
        if !keep && base.chars().count() >= 3 {
            return base.to_string();
        }
    }
    term.to_string()
}

fn is_wordlike(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Lowercased word-like tokens that are not stopwords, unstemmed.
pub fn content_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| is_wordlike(t))
        .map(str::to_lowercase)
        .filter(|t| !is_stopword(t))
        .collect()
}

/// Index terms: content words passed through [`stem`].
pub fn analyze(text: &str) -> Vec<String> {
    content_words(text).iter().map(|w| stem(w)).collect()
}
