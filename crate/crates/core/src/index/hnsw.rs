//! Hierarchical navigable small-world graph over unit vectors.
//!
//! Similarity is cosine, which for unit vectors is the dot product; the
//! graph internally works with distance `1 - dot`. Node levels are drawn
//! from a seeded ChaCha stream so a build is a pure function of
//! (vectors, params).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexParams {
    pub dimension: usize,
    pub hnsw_m: usize,
    pub hnsw_ef_construction: usize,
    pub hnsw_ef_search: usize,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            dimension: 384,
            hnsw_m: 16,
            hnsw_ef_construction: 200,
            hnsw_ef_search: 200,
            metric: Metric::Cosine,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexParamsError {
    #[error("index.dimension must be positive")]
    ZeroDimension,
    #[error("index.hnsw_m must be at least 2, got {0}")]
    SmallM(usize),
    #[error("index.hnsw_ef_construction must be positive")]
    ZeroEfConstruction,
    #[error("index.hnsw_ef_search must be positive")]
    ZeroEfSearch,
}

impl IndexParams {
    pub fn with_dimension(dimension: usize) -> Self {
        IndexParams { dimension, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), IndexParamsError> {
        if self.dimension == 0 {
            return Err(IndexParamsError::ZeroDimension);
        }
        if self.hnsw_m < 2 {
            return Err(IndexParamsError::SmallM(self.hnsw_m));
        }
        if self.hnsw_ef_construction == 0 {
            return Err(IndexParamsError::ZeroEfConstruction);
        }
        if self.hnsw_ef_search == 0 {
            return Err(IndexParamsError::ZeroEfSearch);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Cand {
    dist: f32,
    node: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.node.cmp(&other.node))
    }
}

/// Per-node adjacency, one list per level the node lives on.
pub(crate) type Adjacency = Vec<Vec<u32>>;

#[derive(Debug, Clone)]
pub struct Hnsw {
    pub(crate) dimension: usize,
    pub(crate) m: usize,
    pub(crate) ef_construction: usize,
    pub(crate) vectors: Vec<f32>,
    pub(crate) links: Vec<Adjacency>,
    pub(crate) entry: Option<u32>,
    rng: ChaCha8Rng,
    level_mult: f64,
}

impl Hnsw {
    pub fn new(params: &IndexParams) -> Self {
        Hnsw {
            dimension: params.dimension,
            m: params.hnsw_m,
            ef_construction: params.hnsw_ef_construction,
            vectors: Vec::new(),
            links: Vec::new(),
            entry: None,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            level_mult: 1.0 / (params.hnsw_m as f64).ln(),
        }
    }

    /// Rebuilds from persisted parts.
    pub(crate) fn from_parts(
        params: &IndexParams,
        vectors: Vec<f32>,
        links: Vec<Adjacency>,
        entry: Option<u32>,
    ) -> Self {
        let mut h = Hnsw::new(params);
        h.vectors = vectors;
        h.links = links;
        h.entry = entry;
        h
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn vector(&self, node: usize) -> &[f32] {
        &self.vectors[node * self.dimension..(node + 1) * self.dimension]
    }

    fn dist_to(&self, q: &[f32], node: u32) -> f32 {
        1.0 - dot(q, self.vector(node as usize))
    }

    fn dist_nodes(&self, a: u32, b: u32) -> f32 {
        1.0 - dot(self.vector(a as usize), self.vector(b as usize))
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn top_level(&self) -> usize {
        self.entry.map(|e| self.links[e as usize].len() - 1).unwrap_or(0)
    }

    fn random_level(&mut self) -> usize {
        let u: f64 = self.rng.random_range(f64::MIN_POSITIVE..1.0);
        ((-u.ln()) * self.level_mult).floor() as usize
    }

    /// Beam search on one level; returns up to `ef` nearest, ascending.
    fn search_level(&self, q: &[f32], entries: &[Cand], ef: usize, level: usize, visited: &mut Visited) -> Vec<Cand> {
        visited.reset(self.len());
        let mut candidates: BinaryHeap<std::cmp::Reverse<Cand>> = BinaryHeap::new();
        let mut best: BinaryHeap<Cand> = BinaryHeap::new();
        for &c in entries {
            if visited.insert(c.node) {
                candidates.push(std::cmp::Reverse(c));
                best.push(c);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(std::cmp::Reverse(cur)) = candidates.pop() {
            let worst = best.peek().map(|c| c.dist).unwrap_or(f32::INFINITY);
            if cur.dist > worst && best.len() >= ef {
                break;
            }
            let Some(neigh) = self.links[cur.node as usize].get(level) else { continue };
            for &n in neigh {
                if !visited.insert(n) {
                    continue;
                }
                let d = self.dist_to(q, n);
                let worst = best.peek().map(|c| c.dist).unwrap_or(f32::INFINITY);
                if best.len() < ef || d < worst {
                    let c = Cand { dist: d, node: n };
                    candidates.push(std::cmp::Reverse(c));
                    best.push(c);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Neighbor-selection heuristic: keep a candidate only if it is closer to
    /// the base than to every already kept neighbor, then top up with the
    /// pruned ones so the list reaches `limit` when possible.
    fn select_neighbors(&self, sorted: &[Cand], limit: usize) -> Vec<u32> {
        if sorted.len() <= limit {
            return sorted.iter().map(|c| c.node).collect();
        }
        let mut kept: Vec<Cand> = Vec::with_capacity(limit);
        let mut pruned: Vec<Cand> = Vec::new();
        for &c in sorted {
            if kept.len() >= limit {
                break;
            }
            let diverse = kept.iter().all(|k| self.dist_nodes(c.node, k.node) > c.dist);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= limit {
                break;
            }
            kept.push(c);
        }
        kept.iter().map(|c| c.node).collect()
    }

    /// Appends a unit vector and links it into the graph.
    pub fn insert(&mut self, v: &[f32], visited: &mut Visited) -> u32 {
        assert_eq!(v.len(), self.dimension);
        let node = self.len() as u32;
        let level = self.random_level();
        self.vectors.extend_from_slice(v);
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = self.entry else {
            self.entry = Some(node);
            return node;
        };
        let top = self.top_level();
        let mut ep = vec![Cand { dist: self.dist_to(v, entry), node: entry }];
        for lvl in (level + 1..=top).rev() {
            ep = self.search_level(v, &ep, 1, lvl, visited);
        }
        for lvl in (0..=level.min(top)).rev() {
            let found = self.search_level(v, &ep, self.ef_construction, lvl, visited);
            let chosen = self.select_neighbors(&found, self.m);
            self.links[node as usize][lvl] = chosen.clone();
            let cap = self.max_links(lvl);
            for n in chosen {
                let list = &mut self.links[n as usize][lvl];
                list.push(node);
                if list.len() > cap {
                    let base = self.vector(n as usize).to_vec();
                    let mut cands: Vec<Cand> = self.links[n as usize][lvl]
                        .iter()
                        .map(|&x| Cand { dist: self.dist_to(&base, x), node: x })
                        .collect();
                    cands.sort();
                    self.links[n as usize][lvl] = self.select_neighbors(&cands, cap);
                }
            }
            ep = found;
        }
        if level > top {
            self.entry = Some(node);
        }
        node
    }

    /// Approximate k nearest: `(node, cosine)` best-first.
    pub fn search(&self, q: &[f32], k: usize, ef: usize) -> Vec<(u32, f32)> {
        let Some(entry) = self.entry else { return Vec::new() };
        let mut visited = Visited::default();
        let mut ep = vec![Cand { dist: self.dist_to(q, entry), node: entry }];
        for lvl in (1..=self.top_level()).rev() {
            ep = self.search_level(q, &ep, 1, lvl, &mut visited);
        }
        let found = self.search_level(q, &ep, ef.max(k), 0, &mut visited);
        found.into_iter().take(k).map(|c| (c.node, 1.0 - c.dist)).collect()
    }
}

/// Generation-stamped visited set reused across searches during a build.
#[derive(Debug, Default)]
pub struct Visited {
    stamp: Vec<u32>,
    current: u32,
}

impl Visited {
    fn reset(&mut self, n: usize) {
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        self.current = self.current.wrapping_add(1);
        if self.current == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.current = 1;
        }
    }

    fn insert(&mut self, node: u32) -> bool {
        let slot = &mut self.stamp[node as usize];
        if *slot == self.current {
            false
        } else {
            *slot = self.current;
            true
        }
    }
}
