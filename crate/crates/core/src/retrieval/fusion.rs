//! Reciprocal-rank fusion: `fused(d) = sum over lists containing d of 1 / (c + rank)`
//! with 1-based ranks.

use std::collections::HashMap;

pub const DEFAULT_RRF_CONSTANT: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub id: String,
    pub score: f64,
    /// Best 1-based rank across the input lists.
    pub best_rank: usize,
}

/// Fuses any number of ranked id lists. Output is fused-score descending,
/// then best single-list rank, then id.
pub fn fuse_many<S: AsRef<str>>(lists: &[&[S]], c: f64) -> Vec<Fused> {
    let mut acc: HashMap<&str, (f64, usize)> = HashMap::new();
    for list in lists {
        for (i, id) in list.iter().enumerate() {
            let rank = i + 1;
            let e = acc.entry(id.as_ref()).or_insert((0.0, usize::MAX));
            e.0 += 1.0 / (c + rank as f64);
            e.1 = e.1.min(rank);
        }
    }
    let mut out: Vec<Fused> = acc
        .into_iter()
        .map(|(id, (score, best_rank))| Fused { id: id.to_string(), score, best_rank })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.best_rank.cmp(&b.best_rank))
            .then_with(|| a.id.cmp(&b.id))
    });
    out
}

pub fn fuse<S: AsRef<str>>(dense: &[S], sparse: &[S], c: f64) -> Vec<Fused> {
    fuse_many(&[dense, sparse], c)
}
