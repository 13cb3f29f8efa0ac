use std::collections::HashSet;
use std::path::Path;

use super::codec::{read_file, Decoder, Encoder, LoadError};
use super::embed::{dot, l2_normalize, EmbeddedChunk};
use super::hnsw::{Adjacency, Hnsw, IndexParams, IndexParamsError, Metric, Visited};

const MAGIC: &[u8; 8] = b"CRVECIDX";
const VERSION: u32 = 1;
const NO_ENTRY: u64 = u64::MAX;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Params(#[from] IndexParamsError),
    #[error("chunk {chunk_id} has dimension {got}, index expects {expected}")]
    Dimension { chunk_id: String, expected: usize, got: usize },
    #[error("chunk {chunk_id} has a zero or non-finite vector")]
    BadVector { chunk_id: String },
    #[error("duplicate chunk id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("query dimension {got} does not match index dimension {expected}")]
pub struct DimensionMismatch {
    pub expected: usize,
    pub got: usize,
}

/// Dense ANN index with chunk ids attached to graph nodes.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    params: IndexParams,
    ids: Vec<String>,
    graph: Hnsw,
}

impl VectorIndex {
    pub fn build(embedded: &[EmbeddedChunk], params: IndexParams) -> Result<Self, BuildError> {
        let items: Vec<(String, Vec<f32>)> =
            embedded.iter().map(|e| (e.chunk.chunk_id.clone(), e.vector.clone())).collect();
        Self::from_vectors(items, params)
    }

    pub fn from_vectors(items: Vec<(String, Vec<f32>)>, params: IndexParams) -> Result<Self, BuildError> {
        params.validate()?;
        let mut seen = HashSet::new();
        let mut graph = Hnsw::new(&params);
        let mut ids = Vec::with_capacity(items.len());
        let mut visited = Visited::default();
        for (id, mut v) in items {
            if v.len() != params.dimension {
                return Err(BuildError::Dimension { chunk_id: id, expected: params.dimension, got: v.len() });
            }
            if l2_normalize(&mut v).is_err() {
                return Err(BuildError::BadVector { chunk_id: id });
            }
            if !seen.insert(id.clone()) {
                return Err(BuildError::DuplicateId(id));
            }
            graph.insert(&v, &mut visited);
            ids.push(id);
        }
        Ok(VectorIndex { params, ids, graph })
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        self.graph.vector(i)
    }

    /// Top-k by cosine, descending, ties broken by ascending chunk id.
    /// Uses `max(ef_search, k)` as the beam width; `k >= len` scans everything.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<(&str, f32)>, DimensionMismatch> {
        self.search_with_ef(query, k, self.params.hnsw_ef_search)
    }

    pub fn search_with_ef(&self, query: &[f32], k: usize, ef: usize) -> Result<Vec<(&str, f32)>, DimensionMismatch> {
        if query.len() != self.params.dimension {
            return Err(DimensionMismatch { expected: self.params.dimension, got: query.len() });
        }
        if k == 0 || self.is_empty() {
            return Ok(Vec::new());
        }
        let hits: Vec<(u32, f32)> = if k >= self.len() {
            (0..self.len()).map(|i| (i as u32, dot(query, self.vector(i)))).collect()
        } else {
            self.graph.search(query, k, ef.max(k))
        };
        let mut out: Vec<(&str, f32)> = hits.into_iter().map(|(n, s)| (self.ids[n as usize].as_str(), s)).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out.truncate(k);
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let p = &self.params;
        let mut e = Encoder::new(MAGIC, VERSION);
        e.u32(p.dimension as u32);
        e.u32(p.hnsw_m as u32);
        e.u32(p.hnsw_ef_construction as u32);
        e.u32(p.hnsw_ef_search as u32);
        e.u8(match p.metric {
            Metric::Cosine => 0,
        });
        e.u64(p.seed);
        e.u64(self.ids.len() as u64);
        for id in &self.ids {
            e.str(id);
        }
        e.u64(self.graph.vectors.len() as u64 * 4);
        for x in &self.graph.vectors {
            e.f32(*x);
        }
        e.u64(self.graph.entry.map(u64::from).unwrap_or(NO_ENTRY));
        for adj in &self.graph.links {
            e.u8(adj.len() as u8);
            for level in adj {
                e.u32(level.len() as u32);
                for n in level {
                    e.u32(*n);
                }
            }
        }
        e.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let bytes = read_file(path)?;
        let mut d = Decoder::open(&bytes, path, MAGIC, "dense index", VERSION)?;
        let params = IndexParams {
            dimension: d.u32()? as usize,
            hnsw_m: d.u32()? as usize,
            hnsw_ef_construction: d.u32()? as usize,
            hnsw_ef_search: d.u32()? as usize,
            metric: match d.u8()? {
                0 => Metric::Cosine,
                other => return Err(d.params(format!("unknown metric tag {other}"))),
            },
            seed: d.u64()?,
        };
        params.validate().map_err(|e| d.params(e.to_string()))?;
        let count = d.u64()? as usize;
        let mut ids = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            ids.push(d.str()?);
        }
        let block = d.u64()? as usize;
        let expected = count * params.dimension * 4;
        if block != expected {
            return Err(d.params(format!(
                "declared dimension {} implies {expected} vector bytes, file has {block}",
                params.dimension
            )));
        }
        let mut vectors = Vec::with_capacity(count * params.dimension);
        for _ in 0..count * params.dimension {
            vectors.push(d.f32()?);
        }
        let entry = match d.u64()? {
            NO_ENTRY => None,
            e if (e as usize) < count => Some(e as u32),
            e => return Err(d.corrupt(format!("entry point {e} out of range"))),
        };
        let mut links: Vec<Adjacency> = Vec::with_capacity(count);
        for _ in 0..count {
            let levels = d.u8()? as usize;
            if levels == 0 {
                return Err(d.corrupt("node without level 0"));
            }
            let mut adj = Vec::with_capacity(levels);
            for _ in 0..levels {
                let n = d.u32()? as usize;
                let mut list = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let x = d.u32()?;
                    if x as usize >= count {
                        return Err(d.corrupt(format!("neighbor {x} out of range")));
                    }
                    list.push(x);
                }
                adj.push(list);
            }
            links.push(adj);
        }
        d.finish()?;
        let graph = Hnsw::from_parts(&params, vectors, links, entry);
        Ok(VectorIndex { params, ids, graph })
    }

    /// Loads and checks the stored parameters against what the caller expects.
    pub fn load_expecting(path: &Path, expected_dimension: usize) -> Result<Self, LoadError> {
        let idx = Self::load(path)?;
        if idx.params.dimension != expected_dimension {
            return Err(LoadError::Params {
                path: path.display().to_string(),
                detail: format!(
                    "index dimension {} but provider dimension {expected_dimension}",
                    idx.params.dimension
                ),
            });
        }
        Ok(idx)
    }
}
