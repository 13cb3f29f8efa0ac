#![allow(dead_code)]

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use campus_rag::app::{run_with, Deps, Io};
use campus_rag::generation::LlmClient;
use campus_rag::service::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SITE_ROOT: &str = "https://www.example.edu/";
pub const FAQ_URL: &str = "https://www.example.edu/faq/";
pub const DISALLOWED_URL: &str = "https://www.example.edu/staff-only/";

/// URLs of the fixture pages that robots.txt allows.
pub const ALLOWED_URLS: &[&str] = &[
    "https://www.example.edu/",
    "https://www.example.edu/admissions/",
    "https://www.example.edu/financial-aid/",
    "https://www.example.edu/faq/",
];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn site_dir() -> PathBuf {
    fixtures().join("site")
}

pub fn config_path() -> PathBuf {
    fixtures().join("config.yaml")
}

pub fn fixture_config() -> Config {
    campus_rag::service::load_config(&config_path()).expect("fixture config loads")
}

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process with no environment and an optional LLM double.
pub fn cli(args: &[&str], stdin: &str, llm: Option<Arc<dyn LlmClient>>) -> CliRun {
    let argv: Vec<String> = std::iter::once("campus-rag").chain(args.iter().copied()).map(String::from).collect();
    let mut input = Cursor::new(stdin.as_bytes().to_vec());
    let mut out = Vec::new();
    let mut err = Vec::new();
    let deps = Deps { llm, env: Box::new(|_| None) };
    let code = {
        let mut io = Io { stdin: &mut input, stdout: &mut out, stderr: &mut err };
        run_with(&argv, &mut io, &deps)
    };
    CliRun { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub struct SiteArtifacts {
    pub corpus: PathBuf,
    pub index: PathBuf,
}

/// crawl (offline) -> index build into `dir`, via the CLI.
pub fn build_site(dir: &Path) -> SiteArtifacts {
    let corpus = dir.join("corpus.jsonl");
    let index = dir.join("index/site");
    let cfg = config_path();
    let r = cli(
        &["--config", p(&cfg), "crawl", "--fixtures", p(&site_dir()), "--out", p(&corpus), "--report", p(&dir.join("report.json"))],
        "",
        None,
    );
    assert_eq!(r.code, 0, "crawl failed: {}", r.stderr);
    let r = cli(&["--config", p(&cfg), "index", "build", "--corpus", p(&corpus), "--out", p(&index)], "", None);
    assert_eq!(r.code, 0, "index build failed: {}", r.stderr);
    SiteArtifacts { corpus, index }
}

pub fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| (x / norm) as f32).collect()
        })
        .collect()
}

/// Exhaustive cosine scan in f64: indices of the `k` most similar vectors.
pub fn exhaustive_top_k(vectors: &[Vec<f32>], q: &[f32], k: usize) -> Vec<usize> {
    let norm = |v: &[f32]| v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut scored: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
            (i, dot / (norm(v) * qn))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Direct BM25 over pre-analyzed documents: Lucene idf, distinct query terms.
pub fn bm25_oracle(docs: &[Vec<String>], query: &[String], doc: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let mut terms: Vec<&String> = query.iter().collect();
    terms.sort();
    terms.dedup();
    let dl = docs[doc].len() as f64;
    let mut score = 0.0;
    for t in terms {
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        let tf = docs[doc].iter().filter(|w| *w == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    score
}
