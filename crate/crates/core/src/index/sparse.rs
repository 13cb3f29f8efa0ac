//! BM25 inverted index.
//!
//! score(q, d) = sum over distinct query terms t present in d of
//!   idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
//! with idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5)).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chunk::Chunk;
use super::codec::{read_file, Decoder, Encoder, LoadError};
use crate::analysis::analyze;

const MAGIC: &[u8; 8] = b"CRBM25IX";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    params: Bm25Params,
    ids: Vec<String>,
    lengths: Vec<u32>,
    avg_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl SparseIndex {
    /// Indexes each chunk's analyzed terms (see [`crate::analysis::analyze`]).
    pub fn build(chunks: &[Chunk], params: Bm25Params) -> Self {
        Self::from_terms(
            chunks.iter().map(|c| (c.chunk_id.clone(), analyze(&c.text))).collect(),
            params,
        )
    }

    pub fn from_terms(docs: Vec<(String, Vec<String>)>, params: Bm25Params) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut ids = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        for (doc, (id, terms)) in docs.into_iter().enumerate() {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &terms {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push(Posting { doc: doc as u32, tf: n });
            }
            ids.push(id);
            lengths.push(terms.len() as u32);
        }
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64
        };
        SparseIndex { params, ids, lengths, avg_len, postings }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
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

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.lengths[doc]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores for every document matching at least one term.
    pub fn score_all<S: AsRef<str>>(&self, terms: &[S]) -> HashMap<u32, f64> {
        let Bm25Params { k1, b } = self.params;
        let mut distinct: Vec<&str> = terms.iter().map(AsRef::as_ref).collect();
        distinct.sort_unstable();
        distinct.dedup();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for t in distinct {
            let idf = self.idf(t);
            for p in self.postings(t) {
                let tf = p.tf as f64;
                let dl = self.lengths[p.doc as usize] as f64;
                let norm = if self.avg_len > 0.0 { dl / self.avg_len } else { 0.0 };
                *scores.entry(p.doc).or_default() += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            }
        }
        scores
    }

    pub fn score(&self, terms: &[impl AsRef<str>], doc: usize) -> f64 {
        self.score_all(terms).get(&(doc as u32)).copied().unwrap_or(0.0)
    }

    /// Top-k matching chunks, BM25 descending, ties by ascending chunk id.
    pub fn search<S: AsRef<str>>(&self, terms: &[S], k: usize) -> Vec<(&str, f64)> {
        let mut hits: Vec<(&str, f64)> = self
            .score_all(terms)
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(d, s)| (self.ids[d as usize].as_str(), s))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        hits.truncate(k);
        hits
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut e = Encoder::new(MAGIC, VERSION);
        e.f64(self.params.k1);
        e.f64(self.params.b);
        e.u64(self.ids.len() as u64);
        for (id, len) in self.ids.iter().zip(&self.lengths) {
            e.str(id);
            e.u32(*len);
        }
        e.u64(self.postings.len() as u64);
        for (term, list) in &self.postings {
            e.str(term);
            e.u32(list.len() as u32);
            for p in list {
                e.u32(p.doc);
                e.u32(p.tf);
            }
        }
        e.write_to(path)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let bytes = read_file(path)?;
        let mut d = Decoder::open(&bytes, path, MAGIC, "bm25 index", VERSION)?;
        let params = Bm25Params { k1: d.f64()?, b: d.f64()? };
        if !(params.k1 >= 0.0 && (0.0..=1.0).contains(&params.b)) {
            return Err(d.params(format!("invalid bm25 parameters k1={} b={}", params.k1, params.b)));
        }
        let count = d.u64()? as usize;
        let mut docs: Vec<(String, Vec<String>)> = Vec::with_capacity(count.min(1 << 24));
        let mut lengths = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            docs.push((d.str()?, Vec::new()));
            lengths.push(d.u32()?);
        }
        let nterms = d.u64()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..nterms {
            let term = d.str()?;
            let n = d.u32()? as usize;
            let mut list = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let p = Posting { doc: d.u32()?, tf: d.u32()? };
                if p.doc as usize >= count {
                    return Err(d.corrupt(format!("posting for doc {} out of range", p.doc)));
                }
                list.push(p);
            }
            postings.insert(term, list);
        }
        d.finish()?;
        let avg_len = if count == 0 { 0.0 } else { lengths.iter().map(|&l| l as f64).sum::<f64>() / count as f64 };
        Ok(SparseIndex {
            params,
            ids: docs.into_iter().map(|(id, _)| id).collect(),
            lengths,
            avg_len,
            postings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SparseIndex {
        let doc = |id: &str, t: &str| (id.to_string(), t.split(' ').map(String::from).collect::<Vec<_>>());
        SparseIndex::from_terms(
            vec![
                doc("c1", "apply online apply"),
                doc("c2", "deadline june"),
                doc("c3", "apply deadline portal fee waiver"),
            ],
            Bm25Params::default(),
        )
    }

    #[test]
    fn absent_term_has_no_postings() {
        assert!(toy().postings("parking").is_empty());
        assert!(toy().search(&["parking"], 5).is_empty());
    }

    #[test]
    fn single_chunk_positive() {
        let idx = SparseIndex::from_terms(vec![("x".into(), vec!["apply".into()])], Bm25Params::default());
        assert!(idx.score(&["apply"], 0) > 0.0);
    }

    #[test]
    fn toy_corpus_matches_hand_evaluation() {
        // N=3, lengths 3,2,5, avgdl=10/3
        // df(apply)=2 -> idf = ln(1 + 1.5/2.5) = ln 1.6
        // df(deadline)=2 -> idf = ln 1.6
        let idx = toy();
        let (k1, b, avg) = (1.2f64, 0.75f64, 10.0f64 / 3.0);
        let idf = 1.6f64.ln();
        let part = |tf: f64, dl: f64| idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg));
        let q = ["apply", "deadline"];
        let expected = [part(2.0, 3.0), part(1.0, 2.0), part(1.0, 5.0) + part(1.0, 5.0)];
        for (doc, want) in expected.iter().enumerate() {
            assert!((idx.score(&q, doc) - want).abs() < 1e-9, "doc {doc}");
        }
        let ranked: Vec<&str> = idx.search(&q, 3).into_iter().map(|(id, _)| id).collect();
        let mut order: Vec<(usize, f64)> = expected.iter().copied().enumerate().collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        let want: Vec<&str> = order.iter().map(|(i, _)| ["c1", "c2", "c3"][*i]).collect();
        assert_eq!(ranked, want);
    }

    #[test]
    fn duplicate_query_terms_count_once() {
        let idx = toy();
        assert_eq!(idx.score(&["apply", "apply"], 0), idx.score(&["apply"], 0));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bm25.idx");
        let idx = toy();
        idx.save(&p).unwrap();
        assert_eq!(SparseIndex::load(&p).unwrap(), idx);
    }
}
