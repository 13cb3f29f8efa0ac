//! Chunking, embedding and the dense/sparse index pair.
//!
//! An index named `<name>` is persisted as three files:
//! `<name>.chunks.jsonl` (chunk metadata), `<name>.vec.idx` (HNSW graph and
//! vectors) and `<name>.bm25.idx` (inverted index).

pub mod chunk;
pub mod codec;
pub mod dense;
pub mod embed;
pub mod hnsw;
pub mod sparse;
pub mod tokenize;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub use chunk::{chunk_document, Chunk, ChunkParams, DocRef};
pub use codec::LoadError;
pub use dense::{BuildError, DimensionMismatch, VectorIndex};
pub use embed::{embed_chunks, hash_embed, EmbedError, EmbedOptions, EmbeddedChunk, EmbeddingProvider, HashEmbedder};
pub use hnsw::{IndexParams, Metric};
pub use sparse::{Bm25Params, SparseIndex};
pub use tokenize::{token_count, tokenize, tokenize_count};

use crate::corpus::Document;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error(transparent)]
    Chunk(#[from] chunk::ChunkParamsError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("index files disagree: {0}")]
    Inconsistent(String),
}

/// Paths of the three files making up a named index.
#[derive(Debug, Clone)]
pub struct IndexPaths {
    pub chunks: PathBuf,
    pub dense: PathBuf,
    pub sparse: PathBuf,
}

impl IndexPaths {
    pub fn new(name: impl AsRef<Path>) -> Self {
        let base = name.as_ref().to_string_lossy().into_owned();
        IndexPaths {
            chunks: PathBuf::from(format!("{base}.chunks.jsonl")),
            dense: PathBuf::from(format!("{base}.vec.idx")),
            sparse: PathBuf::from(format!("{base}.bm25.idx")),
        }
    }

    pub fn all_exist(&self) -> bool {
        self.chunks.exists() && self.dense.exists() && self.sparse.exists()
    }
}

/// Chunks plus both indexes, with chunk ids resolvable to chunks.
#[derive(Debug, Clone)]
pub struct IndexSet {
    pub chunks: Vec<Chunk>,
    pub dense: VectorIndex,
    pub sparse: SparseIndex,
    by_id: HashMap<String, usize>,
}

impl IndexSet {
    pub fn new(chunks: Vec<Chunk>, dense: VectorIndex, sparse: SparseIndex) -> Result<Self, IndexError> {
        if dense.len() != chunks.len() || sparse.len() != chunks.len() {
            return Err(IndexError::Inconsistent(format!(
                "{} chunks, {} dense vectors, {} sparse documents",
                chunks.len(),
                dense.len(),
                sparse.len()
            )));
        }
        let by_id: HashMap<String, usize> =
            chunks.iter().enumerate().map(|(i, c)| (c.chunk_id.clone(), i)).collect();
        for id in dense.ids().iter().chain(sparse.ids()) {
            if !by_id.contains_key(id) {
                return Err(IndexError::Inconsistent(format!("index refers to unknown chunk {id}")));
            }
        }
        Ok(IndexSet { chunks, dense, sparse, by_id })
    }

    /// Chunks every document, embeds and builds both indexes.
    pub fn build(
        docs: &[Document],
        chunk_params: &ChunkParams,
        index_params: IndexParams,
        bm25: Bm25Params,
        provider: &dyn EmbeddingProvider,
        embed_opts: EmbedOptions,
    ) -> Result<Self, IndexError> {
        chunk_params.validate()?;
        let chunks: Vec<Chunk> = docs.iter().flat_map(|d| chunk_document(d, chunk_params)).collect();
        let embedded = embed_chunks(&chunks, provider, embed_opts)?;
        let dense = VectorIndex::build(&embedded, index_params)?;
        let sparse = SparseIndex::build(&chunks, bm25);
        Self::new(chunks, dense, sparse)
    }

    pub fn get(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn save(&self, name: impl AsRef<Path>) -> Result<IndexPaths, IndexError> {
        let paths = IndexPaths::new(name);
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| IndexError::Io { path, source }
        };
        if let Some(parent) = paths.chunks.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io(parent))?;
        }
        let mut w = BufWriter::new(File::create(&paths.chunks).map_err(io(&paths.chunks))?);
        for c in &self.chunks {
            serde_json::to_writer(&mut w, c).expect("chunks always serialize");
            w.write_all(b"\n").map_err(io(&paths.chunks))?;
        }
        w.flush().map_err(io(&paths.chunks))?;
        self.dense.save(&paths.dense).map_err(io(&paths.dense))?;
        self.sparse.save(&paths.sparse).map_err(io(&paths.sparse))?;
        Ok(paths)
    }

    pub fn load(name: impl AsRef<Path>) -> Result<Self, IndexError> {
        let paths = IndexPaths::new(name);
        let chunks = read_chunks(&paths.chunks)?;
        let dense = VectorIndex::load(&paths.dense)?;
        let sparse = SparseIndex::load(&paths.sparse)?;
        Self::new(chunks, dense, sparse)
    }
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, LoadError> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|source| LoadError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LoadError::Io { path: p.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let c = serde_json::from_str(&line)
            .map_err(|e| LoadError::Metadata { path: p.clone(), line: i + 1, detail: e.to_string() })?;
        out.push(c);
    }
    Ok(out)
}
