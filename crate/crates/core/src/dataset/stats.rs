use std::collections::HashSet;

use super::InstructionPair;
use crate::corpus::{CorpusStats, Document};
use crate::index::token_count;

/// URL extensions counted as documents rather than web pages.
pub const DOCUMENT_EXTENSIONS: &[&str] =
    &["pdf", "doc", "docx", "ppt", "pptx", "xls", "xlsx", "odt", "ods", "odp", "rtf", "txt", "csv", "md"];

pub fn is_document_url(url: &str) -> bool {
    let path = url::Url::parse(url).map(|u| u.path().to_string()).unwrap_or_else(|_| url.to_string());
    let last = path.rsplit('/').next().unwrap_or("");
    match last.rsplit_once('.') {
        Some((_, ext)) => DOCUMENT_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()),
        None => false,
    }
}

fn median(sorted: &[usize]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0,
    }
}

/// Pages and documents are told apart by URL extension. Pair figures use
/// unique (instruction, response) pairs.
pub fn compute_corpus_stats(corpus: &[Document], pairs: &[InstructionPair]) -> CorpusStats {
    let total_documents = corpus.iter().filter(|d| is_document_url(&d.source_url)).count();
    let total_tokens = corpus.iter().map(|d| token_count(&d.content)).sum();
    let mut seen = HashSet::new();
    let mut lengths: Vec<usize> = pairs
        .iter()
        .filter(|p| seen.insert((p.instruction.as_str(), p.response.as_str())))
        .map(|p| token_count(&p.response))
        .collect();
    lengths.sort_unstable();
    let mean = if lengths.is_empty() { 0.0 } else { lengths.iter().sum::<usize>() as f64 / lengths.len() as f64 };
    CorpusStats {
        total_pages: corpus.len() - total_documents,
        total_documents,
        total_tokens,
        pair_count: lengths.len(),
        mean_response_tokens: mean,
        median_response_tokens: median(&lengths),
    }
}
