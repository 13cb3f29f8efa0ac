use std::collections::HashSet;

use campus_rag::corpus::{normalize_text, validate_document, Document, Section};
use campus_rag::index::{chunk_document, token_count, ChunkParams};
use campus_rag::ingest::{deduplicate, extract_document};
use campus_rag::service::Config;
use chrono::NaiveDate;
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "tuition", "housing", "deadline", "the", "library", "hours", "apply", "online", "portal", "fall", "spring",
    "office", "students", "financial", "aid", "form", "before", "march", "résumé", "café",
];

fn date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 1).unwrap()
}

/// Text with the characters normalization cares about mixed in.
fn messy_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        prop::sample::select(WORDS).prop_map(str::to_owned),
        Just(" ".to_owned()),
        Just("\t\n  ".to_owned()),
        Just("\u{2019}".to_owned()),
        Just("\u{201C}".to_owned()),
        Just("\u{2014}".to_owned()),
        Just("\u{200B}".to_owned()),
        Just("e\u{0301}".to_owned()),
        Just("\u{00A0}".to_owned()),
    ];
    prop::collection::vec(piece, 0..40).prop_map(|v| v.concat())
}

fn sentence(min: usize, max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), min..max).prop_map(|w| w.join(" "))
}

fn document(i: usize, sections: Vec<(String, String)>) -> Document {
    Document::from_sections(
        format!("https://u.edu/p{i}"),
        format!("Page {i}"),
        date(),
        "general",
        sections.into_iter().map(|(heading, content)| Section { heading, content }).collect(),
    )
    .normalized()
}

fn corpus() -> impl Strategy<Value = Vec<Document>> {
    let sections = prop::collection::vec((sentence(0, 4), sentence(1, 60)), 1..4);
    prop::collection::vec(sections, 1..12).prop_flat_map(|docs| {
        let n = docs.len();
        // Repeat some documents under new URLs so exact duplicates occur.
        (Just(docs), prop::collection::vec(0..n, 0..n)).prop_map(|(docs, repeats)| {
            let mut all: Vec<Document> = docs.iter().cloned().enumerate().map(|(i, s)| document(i, s)).collect();
            for (j, r) in repeats.into_iter().enumerate() {
                all.push(document(100 + j, docs[r].clone()));
            }
            all
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalization_is_idempotent(s in messy_text()) {
        let once = normalize_text(&s);
        prop_assert_eq!(normalize_text(&once), once.clone());
        prop_assert!(!once.contains("  ") && once.trim() == once, "whitespace in {:?}", once);
        prop_assert!(!once.contains(['\u{200B}', '\u{2019}']), "unmapped character in {:?}", once);
    }

    #[test]
    fn dedup_is_idempotent_and_keeps_first(docs in corpus(), near in prop::option::of(0.5f64..1.0)) {
        let (kept, dropped) = deduplicate(docs.clone(), near);
        prop_assert_eq!(kept.len() + dropped, docs.len());
        let hashes: HashSet<&str> = kept.iter().map(|d| d.metadata.content_hash.as_str()).collect();
        prop_assert_eq!(hashes.len(), kept.len());
        // Survivors keep their input order.
        let positions: Vec<usize> =
            kept.iter().map(|k| docs.iter().position(|d| d.source_url == k.source_url).unwrap()).collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let (again, dropped_again) = deduplicate(kept.clone(), near);
        prop_assert_eq!(dropped_again, 0);
        prop_assert_eq!(again, kept);
    }

    #[test]
    fn exact_dedup_keeps_one_per_hash(docs in corpus()) {
        let distinct: HashSet<&str> = docs.iter().map(|d| d.metadata.content_hash.as_str()).collect();
        let (kept, _) = deduplicate(docs.clone(), None);
        prop_assert_eq!(kept.len(), distinct.len());
    }

    #[test]
    fn chunks_respect_limits(docs in corpus(), max in 8usize..64, overlap_frac in 0.0f64..0.9) {
        let overlap = ((max as f64) * overlap_frac) as usize;
        let params = ChunkParams { max_tokens: max, min_tokens: max / 2, overlap_tokens: overlap };
        let mut ids = HashSet::new();
        for d in &docs {
            let chunks = chunk_document(d, &params);
            prop_assert!(!chunks.is_empty());
            for c in &chunks {
                prop_assert!(ids.insert(c.chunk_id.clone()), "duplicate id {}", c.chunk_id);
                prop_assert!(c.chunk_id.starts_with(&d.metadata.content_hash[..16]));
                prop_assert!(c.token_len() >= 1 && c.token_len() <= max);
                prop_assert!(c.doc_ref.section_index < d.sections.len().max(1));
                prop_assert_eq!(&c.doc_ref.source_url, &d.source_url);
                prop_assert!(!c.text.trim().is_empty());
            }
            ids.clear();
        }
    }

    #[test]
    fn extracted_documents_are_valid(
        title in sentence(1, 5),
        blocks in prop::collection::vec((sentence(1, 5), sentence(12, 40)), 1..5),
        noise in messy_text(),
    ) {
        let mut html = format!("<html><head><title>{title}</title></head><body><nav><a href=\"/\">Home</a></nav><main>");
        for (h, p) in &blocks {
            html.push_str(&format!("<h2>{h}</h2><p>{p} {noise} &amp; more</p>"));
        }
        html.push_str("</main><footer>Copyright</footer></body></html>");
        let doc = extract_document("https://u.edu/page", Some("text/html"), html.as_bytes(), date(), None).unwrap();
        prop_assert_eq!(validate_document(&doc), vec![]);
        prop_assert_eq!(normalize_text(&doc.content), doc.content.clone());
        prop_assert!(token_count(&doc.content) >= 12);
        for (_, p) in &blocks {
            prop_assert!(doc.content.contains(p.as_str()), "missing paragraph {p:?}");
        }
    }

    #[test]
    fn config_survives_yaml(
        temperature in 0.0f64..2.0,
        top_p in 0.01f64..=1.0,
        penalty in 1.0f64..2.0,
        max_new in 1u32..=1024,
        k_final in 1usize..10,
        extra in 0usize..40,
        seed in any::<u64>(),
        port in 1u16..,
    ) {
        let mut c = Config::default();
        c.generation.temperature = temperature;
        c.generation.top_p = top_p;
        c.generation.repetition_penalty = penalty;
        c.generation.max_new_tokens = max_new;
        c.retrieval.k_final = k_final;
        c.retrieval.k_candidates = k_final + extra;
        c.index.seed = seed;
        c.service.port = port;
        prop_assert!(c.validate().is_ok());
        let back = Config::parse(&c.to_yaml(), "generated").unwrap();
        prop_assert_eq!(back, c);
    }
}
