//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use campus_rag::analysis::analyze;
use campus_rag::corpus::{read_corpus, validate_document, write_corpus, Document, Section};
use campus_rag::dataset::{load_jsonl, Strategy as PairStrategy};
use campus_rag::generation::{
    assemble_prompt, build_request, CannedClient, CapturingClient, GenerationParams, HttpLlmClient, LlmClient,
    PersonaConfig, PromptFormat,
};
use campus_rag::index::chunk::window_spans;
use campus_rag::index::{chunk_document, Bm25Params, ChunkParams, IndexParams, IndexSet, LoadError, SparseIndex, VectorIndex};
use campus_rag::retrieval::{fuse, RetrievalParams};
use campus_rag::service::Config;
use chrono::NaiveDate;
use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const RECALL_AT_10_MIN: f64 = 0.95;
const DENSE_RUNTIME_LIMIT: Duration = Duration::from_secs(60);
const BM25_TOLERANCE: f64 = 1e-9;
const RRF_TOLERANCE: f64 = 1e-12;
const PROPERTY_CASES: u32 = 1000;
const PIPELINE_RUNTIME_LIMIT: Duration = Duration::from_secs(30);

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let dim = 64;
    let data = random_unit_vectors(10_000, dim, 1);
    let items: Vec<(String, Vec<f32>)> = data.iter().enumerate().map(|(i, v)| (format!("v{i:05}"), v.clone())).collect();
    let index = VectorIndex::from_vectors(items, IndexParams::with_dimension(dim)).map_err(|e| e.to_string())?;
    let queries = random_unit_vectors(200, dim, 2);
    let mut hits = 0usize;
    for q in &queries {
        let truth: HashSet<String> = exhaustive_top_k(&data, q, 10).into_iter().map(|i| format!("v{i:05}")).collect();
        let got = index.search(q, 10).map_err(|e| e.to_string())?;
        hits += got.iter().filter(|(id, _)| truth.contains(*id)).count();
    }
    let recall = hits as f64 / (10 * queries.len()) as f64;
    ensure(recall >= RECALL_AT_10_MIN, format!("recall@10 = {recall:.4} < {RECALL_AT_10_MIN}"))?;

    let small = random_unit_vectors(200, dim, 3);
    let items: Vec<(String, Vec<f32>)> = small.iter().enumerate().map(|(i, v)| (format!("s{i:03}"), v.clone())).collect();
    let exact = VectorIndex::from_vectors(items, IndexParams::with_dimension(dim)).map_err(|e| e.to_string())?;
    let mut exact_hits = 0usize;
    let probes = random_unit_vectors(100, dim, 4);
    for q in &probes {
        let truth: HashSet<String> = exhaustive_top_k(&small, q, 10).into_iter().map(|i| format!("s{i:03}")).collect();
        let got = exact.search_with_ef(q, 10, small.len()).map_err(|e| e.to_string())?;
        exact_hits += got.iter().filter(|(id, _)| truth.contains(*id)).count();
    }
    let exact_recall = exact_hits as f64 / (10 * probes.len()) as f64;
    ensure(exact_recall == 1.0, format!("exact-mode recall = {exact_recall}"))?;
    let elapsed = started.elapsed();
    ensure(elapsed < DENSE_RUNTIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("recall@10 = {recall:.4}, exact recall = {exact_recall}, {:.1}s", elapsed.as_secs_f64()))
}

const WORDS: &[&str] = &[
    "admission", "apply", "deadline", "transcript", "scholarship", "grant", "loan", "tuition", "campus", "housing",
    "advising", "registrar", "semester", "course", "degree", "major", "minor", "credit", "portal", "student",
    "faculty", "library", "parking", "dining", "the", "and", "of", "to", "for", "is", "a", "in",
];

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let date = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
    let mut docs: Vec<Document> = fixture_site_documents();
    for d in 0..20 {
        let sections = (0..3)
            .map(|s| {
                let len = rng.random_range(5..60);
                let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
                Section { heading: format!("Part {s}"), content: text.join(" ") + "." }
            })
            .collect();
        docs.push(Document::from_sections(format!("https://www.example.edu/doc{d}/"), "Doc", date, "general", sections));
    }
    let params = ChunkParams { max_tokens: 40, min_tokens: 10, overlap_tokens: 8 };
    let mut chunks: Vec<_> = docs.iter().flat_map(|d| chunk_document(d, &params)).collect();
    chunks.truncate(100);
    let bm = Bm25Params::default();
    ensure(bm.k1 == 1.2 && bm.b == 0.75, format!("default BM25 params are k1={}, b={}", bm.k1, bm.b))?;
    let index = SparseIndex::build(&chunks, bm);
    let analyzed: Vec<Vec<String>> = chunks.iter().map(|c| analyze(&c.text)).collect();
    let mut worst = 0.0f64;
    let mut pairs = 0usize;
    for qi in 0..50 {
        let n = rng.random_range(1..5);
        let mut q: Vec<&str> = (0..n).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
        if qi % 10 == 0 {
            q.push("zzyzx");
        }
        let terms = analyze(&q.join(" "));
        for (doc, id) in index.ids().iter().enumerate() {
            let expect = bm25_oracle(&analyzed, &terms, doc, 1.2, 0.75);
            let got = index.score(&terms, doc);
            worst = worst.max((got - expect).abs());
            pairs += 1;
            ensure((got - expect).abs() <= BM25_TOLERANCE, format!("{id} for {terms:?}: {got} vs {expect}"))?;
        }
    }
    Ok(format!("{} chunks x 50 queries = {pairs} pairs, max |diff| = {worst:.2e}", chunks.len()))
}

fn fixture_site_documents() -> Vec<Document> {
    let dir = tempfile::tempdir().unwrap();
    let site = build_site(dir.path());
    read_corpus(&site.corpus).unwrap_or_default()
}

fn criterion_3() -> Outcome {
    let golden = window_spans(1000, &ChunkParams { max_tokens: 512, min_tokens: 256, overlap_tokens: 64 });
    ensure(golden == vec![[0, 512], [448, 960], [896, 1000]], format!("1000/512/64 gave {golden:?}"))?;
    let mut runner = TestRunner::new(PropConfig { cases: PROPERTY_CASES, failure_persistence: None, ..PropConfig::default() });
    let strategy = (1usize..=5000, 1usize..=1024).prop_flat_map(|(n, max)| (Just(n), Just(max), 0..max));
    runner
        .run(&strategy, |(n, max, overlap)| {
            let params = ChunkParams { max_tokens: max, min_tokens: max / 2, overlap_tokens: overlap };
            prop_assert!(params.validate().is_ok());
            let spans = window_spans(n, &params);
            prop_assert_eq!(spans[0][0], 0);
            prop_assert_eq!(spans.last().unwrap()[1], n);
            for s in &spans {
                prop_assert!(s[0] < s[1] && s[1] - s[0] <= max);
            }
            for w in spans.windows(2) {
                prop_assert_eq!(w[1][0], w[0][0] + (max - overlap));
                prop_assert_eq!(w[0][1] - w[1][0], overlap);
                prop_assert_eq!(w[0][1] - w[0][0], max);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("golden spans ok, {PROPERTY_CASES} random cases"))
}

fn ranked_list(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut ids: Vec<usize> = (0..30).collect();
    ids.shuffle(rng);
    let n = rng.random_range(0..20);
    ids.into_iter().take(n).map(|i| format!("d{i:02}")).collect()
}

fn score_of(fused: &[campus_rag::retrieval::Fused], id: &str) -> f64 {
    fused.iter().find(|f| f.id == id).map(|f| f.score).unwrap_or(0.0)
}

fn criterion_4() -> Outcome {
    let single = fuse(&["x"], &[] as &[&str], 60.0);
    let diff = (single[0].score - 1.0 / 61.0).abs();
    ensure(diff <= RRF_TOLERANCE, format!("rank-1 score {} differs from 1/61 by {diff:e}", single[0].score))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..PROPERTY_CASES {
        let a = ranked_list(&mut rng);
        let b = ranked_list(&mut rng);
        let ab = fuse(&a, &b, 60.0);
        let ba = fuse(&b, &a, 60.0);
        ensure(ab == ba, format!("case {case}: fusion is not symmetric"))?;
        // An item ranked ahead of another in both lists fuses strictly higher.
        let pos = |l: &[String], id: &str| l.iter().position(|x| x == id);
        for x in &a {
            for y in &a {
                if let (Some(ax), Some(ay), Some(bx), Some(by)) = (pos(&a, x), pos(&a, y), pos(&b, x), pos(&b, y)) {
                    if ax < ay && bx < by {
                        ensure(score_of(&ab, x) > score_of(&ab, y), format!("case {case}: {x} should beat {y}"))?;
                    }
                }
            }
        }
        // Promoting an item one place in one list never lowers its score.
        if a.len() >= 2 {
            let i = rng.random_range(1..a.len());
            let mut promoted = a.clone();
            promoted.swap(i - 1, i);
            let after = fuse(&promoted, &b, 60.0);
            ensure(
                score_of(&after, &a[i]) >= score_of(&ab, &a[i]),
                format!("case {case}: promoting {} lowered its score", a[i]),
            )?;
        }
    }
    Ok(format!("1/61 within {RRF_TOLERANCE:e}, {PROPERTY_CASES} random list pairs"))
}

/// Minimal OpenAI-compatible endpoint recording request bodies.
fn mock_llm(rt: &tokio::runtime::Runtime) -> (String, Arc<Mutex<Vec<Value>>>) {
    use axum::routing::post;
    use axum::{Json, Router};
    let seen: Arc<Mutex<Vec<Value>>> = Arc::default();
    let store = seen.clone();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move |Json(body): Json<Value>| {
            let store = store.clone();
            async move {
                store.lock().unwrap().push(body);
                Json(json!({
                    "model": "mock",
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": "ok"}}],
                    "usage": {"prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2}
                }))
            }
        }),
    );
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), seen)
}

fn criterion_5() -> Outcome {
    let persona = PersonaConfig::default();
    let sft = assemble_prompt("hi", &[], PromptFormat::SftInstruction, &persona).map_err(|e| e.to_string())?;
    ensure(sft.rendered == "Instruction: hi\nResponse:", format!("sft prompt was {:?}", sft.rendered))?;

    let defaults = GenerationParams::default();
    let expect = |w: &Value| -> Result<(), String> {
        ensure(
            w["temperature"] == json!(0.7) && w["top_p"] == json!(0.9) && w["repetition_penalty"] == json!(1.1),
            format!("wire body {w}"),
        )
    };
    let rt = tokio::runtime::Runtime::new().unwrap();
    let bundle = assemble_prompt("How do I apply?", &[], PromptFormat::RagChat, &persona).map_err(|e| e.to_string())?;
    let capturing = CapturingClient::new(CannedClient::new("ok"));
    let captured = capturing.captured.clone();
    rt.block_on(capturing.complete(&build_request(&bundle, &defaults, "m"))).map_err(|e| e.to_string())?;
    expect(&captured.lock().unwrap()[0])?;

    let (base, seen) = mock_llm(&rt);
    let client = HttpLlmClient::new(base, "m", None, Default::default(), 2).map_err(|e| e.to_string())?;
    rt.block_on(client.complete(&build_request(&bundle, &defaults, "m"))).map_err(|e| e.to_string())?;
    expect(&seen.lock().unwrap()[0])?;

    ensure(RetrievalParams::default().k_final == 3, "RetrievalParams k_final")?;
    ensure(Config::default().retrieval.k_final == 3, "config k_final")?;
    Ok("sft template byte-exact; 0.7/0.9/1.1 on the wire (double and HTTP); k_final = 3".into())
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let site = build_site(dir.path());
    let docs = read_corpus(&site.corpus).map_err(|e| e.to_string())?;
    for d in &docs {
        let v = validate_document(d);
        ensure(v.is_empty(), format!("{} fails validation: {v:?}", d.source_url))?;
    }
    let urls: HashSet<&str> = docs.iter().map(|d| d.source_url.as_str()).collect();
    ensure(!urls.contains(DISALLOWED_URL), "robots-disallowed page is in the corpus")?;
    ensure(urls.len() == ALLOWED_URLS.len(), format!("corpus holds {urls:?}"))?;

    let llm: Arc<dyn LlmClient> =
        Arc::new(CannedClient::new("Apply online through the admissions portal before March 1 [1]."));
    let r = cli(
        &["--config", p(&config_path()), "--json", "chat", "--index", p(&site.index)],
        "How do I apply for admission?\nexit\n",
        Some(llm),
    );
    ensure(r.code == 0, format!("chat exited {}: {}", r.code, r.stderr))?;
    let line = r.stdout.lines().next().ok_or("chat printed nothing")?;
    let answer: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let citations = answer["citations"].as_array().ok_or("no citations array")?;
    ensure(!citations.is_empty(), "answer has no citations")?;
    for c in citations {
        let url = c["source_url"].as_str().unwrap_or("");
        ensure(ALLOWED_URLS.contains(&url), format!("citation {url} is not a fixture page"))?;
    }
    ensure(citations[0]["in_text"] == json!(true), "marker [1] did not resolve")?;
    let elapsed = started.elapsed();
    ensure(elapsed < PIPELINE_RUNTIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} documents, {} citations, first cites {}, {:.1}s",
        docs.len(),
        citations.len(),
        citations[0]["source_url"],
        elapsed.as_secs_f64()
    ))
}

fn criterion_7() -> Outcome {
    let dim = 64;
    let dir = tempfile::tempdir().unwrap();
    let data = random_unit_vectors(1000, dim, 7);
    let items: Vec<(String, Vec<f32>)> = data.iter().enumerate().map(|(i, v)| (format!("c{i:04}"), v.clone())).collect();
    let index = VectorIndex::from_vectors(items, IndexParams::with_dimension(dim)).map_err(|e| e.to_string())?;
    let path = dir.path().join("p.vec.idx");
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = VectorIndex::load(&path).map_err(|e| e.to_string())?;
    for (i, q) in random_unit_vectors(100, dim, 8).iter().enumerate() {
        let a = index.search(q, 10).map_err(|e| e.to_string())?;
        let b = loaded.search(q, 10).map_err(|e| e.to_string())?;
        let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
        ensure(same, format!("probe {i}: results differ after reload"))?;
    }

    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.vec.idx");
    std::fs::write(&cut, &bytes[..bytes.len() - 100]).unwrap();
    match VectorIndex::load(&cut) {
        Err(LoadError::Checksum { .. }) => {}
        other => return Err(format!("truncated load gave {:?}", other.map(|_| "an index"))),
    }

    let site = build_site(dir.path());
    let sparse = format!("{}.bm25.idx", site.index.display());
    let sb = std::fs::read(&sparse).unwrap();
    std::fs::write(&sparse, &sb[..sb.len() - 10]).unwrap();
    ensure(IndexSet::load(&site.index).is_err(), "truncated index set loaded")?;
    Ok("100 probes identical after reload; truncation -> checksum error".into())
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let site = build_site(dir.path());
    let build = |out: &str, corpus: &std::path::Path| {
        let out = dir.path().join(out);
        let r = cli(&["dataset", "build", "--corpus", p(corpus), "--out", p(&out), "--augment"], "", None);
        (r, out)
    };
    let (r1, a) = build("a.jsonl", &site.corpus);
    let (r2, b) = build("b.jsonl", &site.corpus);
    ensure(r1.code == 0 && r2.code == 0, format!("dataset build failed: {}{}", r1.stderr, r2.stderr))?;
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    ensure(!ba.is_empty() && ba == bb, "two builds differ")?;

    let faq: Vec<Document> = read_corpus(&site.corpus).unwrap().into_iter().filter(|d| d.source_url == FAQ_URL).collect();
    ensure(faq.len() == 1, "FAQ page missing from corpus")?;
    let faq_corpus = dir.path().join("faq.jsonl");
    write_corpus(&faq_corpus, &faq).unwrap();
    let out = dir.path().join("faq-pairs.jsonl");
    let r = cli(&["dataset", "build", "--corpus", p(&faq_corpus), "--out", p(&out)], "", None);
    ensure(r.code == 0, r.stderr)?;
    let pairs = load_jsonl(&out).map_err(|e| e.to_string())?;
    ensure(pairs.len() == 3, format!("FAQ fixture gave {} pairs", pairs.len()))?;
    ensure(pairs.iter().all(|p| p.strategy == PairStrategy::Faq && p.source_url == FAQ_URL), "wrong strategy or provenance")?;
    let all = load_jsonl(&a).unwrap();
    let faq_in_full = all.iter().filter(|p| p.strategy == PairStrategy::Faq).count();
    ensure(faq_in_full == 3, format!("full build has {faq_in_full} FAQ pairs"))?;
    Ok(format!("{} bytes identical across runs; FAQ fixture -> 3 pairs from {FAQ_URL}", ba.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("dense retrieval fidelity", criterion_1),
        ("BM25 oracle equivalence", criterion_2),
        ("chunker arithmetic", criterion_3),
        ("fusion", criterion_4),
        ("prompt and decoding constants", criterion_5),
        ("offline pipeline end-to-end", criterion_6),
        ("index persistence", criterion_7),
        ("dataset determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
