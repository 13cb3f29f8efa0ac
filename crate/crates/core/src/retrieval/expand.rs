use crate::analysis::{content_words, stem};

/// Appends extra terms to an expanded query. Implementations may add
/// synonyms but the caller never lets them drop terms.
pub trait QueryExpander: Send + Sync {
    fn expand(&self, query: &str, terms: &[String]) -> Vec<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ExpandedQuery {
    pub terms: Vec<String>,
    /// True when stopword filtering left nothing and raw tokens were used.
    pub fallback: bool,
}

fn push_unique(out: &mut Vec<String>, t: String) {
    if !out.contains(&t) {
        out.push(t);
    }
}

/// Lowercases, drops stopwords and punctuation, then adds the stemmed form
/// of every content word after the word itself. Falls back to the raw
/// lowercased whitespace tokens when nothing survives.
pub fn expand_query(query: &str) -> ExpandedQuery {
    let mut terms = Vec::new();
    for w in content_words(query) {
        let s = stem(&w);
        push_unique(&mut terms, w);
        push_unique(&mut terms, s);
    }
    if terms.is_empty() {
        let raw = query.to_lowercase().split_whitespace().map(str::to_owned).collect();
        return ExpandedQuery { terms: raw, fallback: true };
    }
    ExpandedQuery { terms, fallback: false }
}

pub fn expand_with(query: &str, plugin: Option<&dyn QueryExpander>) -> ExpandedQuery {
    let mut q = expand_query(query);
    if let Some(p) = plugin {
        for t in p.expand(query, &q.terms) {
            let t = t.trim().to_lowercase();
            if !t.is_empty() {
                push_unique(&mut q.terms, t);
            }
        }
    }
    q
}
