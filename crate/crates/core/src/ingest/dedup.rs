use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use crate::corpus::{content_hash, normalize_text, Document};
use crate::index::tokenize;

pub const SHINGLE_SIZE: usize = 5;

/// Hashed word 5-gram shingles of lowercased text. Texts shorter than five
/// tokens yield a single shingle of all their tokens.
pub fn shingles(text: &str) -> HashSet<u64> {
    let lower = text.to_lowercase();
    let toks: Vec<&str> = tokenize(&lower);
    let hash = |w: &[&str]| {
        let mut h = DefaultHasher::new();
        w.hash(&mut h);
        h.finish()
    };
    if toks.is_empty() {
        return HashSet::new();
    }
    if toks.len() < SHINGLE_SIZE {
        return std::iter::once(hash(&toks)).collect();
    }
    toks.windows(SHINGLE_SIZE).map(hash).collect()
}

pub fn jaccard(a: &HashSet<u64>, b: &HashSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Keeps the first document per normalized-content hash and, when
/// `near_threshold` is set, drops documents whose shingle Jaccard against an
/// already kept document reaches it. Order is preserved.
pub fn deduplicate(docs: Vec<Document>, near_threshold: Option<f64>) -> (Vec<Document>, usize) {
    let mut hashes = HashSet::new();
    let mut kept_shingles: Vec<HashSet<u64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = 0;
    for d in docs {
        if !hashes.insert(content_hash(&normalize_text(&d.content))) {
            dropped += 1;
            continue;
        }
        if let Some(t) = near_threshold {
            let sh = shingles(&d.content);
            if kept_shingles.iter().any(|k| jaccard(k, &sh) >= t) {
                dropped += 1;
                continue;
            }
            kept_shingles.push(sh);
        }
        kept.push(d);
    }
    (kept, dropped)
}
