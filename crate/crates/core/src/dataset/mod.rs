//! Instruction-pair generation and export.

pub mod export;
pub mod faq;
pub mod reformulate;
pub mod stats;
pub mod templates;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use export::{export_jsonl, load_jsonl, write_review_csv, ExportError, ExportReport};
pub use faq::extract_faq_pairs;
pub use reformulate::{augment_reformulations, default_patterns, VariantPattern};
pub use stats::compute_corpus_stats;
pub use templates::{generate_template_pairs, QuestionTemplate, TemplateError, TemplateSet};

use crate::corpus::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Faq,
    Template,
    Reformulation,
    Synthetic,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Faq => "faq",
            Strategy::Template => "template",
            Strategy::Reformulation => "reformulation",
            Strategy::Synthetic => "synthetic",
        }
    }
}

/// Field order here is the export's key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub instruction: String,
    pub response: String,
    pub source_url: String,
    pub strategy: Strategy,
    pub parent_id: Option<String>,
}

impl InstructionPair {
    pub fn new(
        instruction: impl Into<String>,
        response: impl Into<String>,
        source_url: &str,
        strategy: Strategy,
        parent_id: Option<String>,
    ) -> Self {
        InstructionPair {
            instruction: instruction.into(),
            response: response.into(),
            source_url: source_url.to_string(),
            strategy,
            parent_id,
        }
    }

    /// First 16 hex digits of SHA-256 over instruction, 0x1F, response.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.instruction.as_bytes());
        h.update([0x1f]);
        h.update(self.response.as_bytes());
        hex::encode(h.finalize())[..16].to_string()
    }
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub augment: bool,
    pub patterns: Vec<VariantPattern>,
}

impl BuildOptions {
    pub fn augmented() -> Self {
        BuildOptions { augment: true, patterns: default_patterns() }
    }
}

/// Per document in corpus order: FAQ pairs, then template pairs in template
/// order, each followed by its reformulations when augmenting. Exact
/// (instruction, response) repeats are dropped, keeping the first.
pub fn build_pairs(corpus: &[Document], templates: &TemplateSet, options: &BuildOptions) -> Vec<InstructionPair> {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::new();
    let mut push = |p: InstructionPair, out: &mut Vec<InstructionPair>| {
        if p.instruction.trim().is_empty() || p.response.trim().is_empty() {
            return;
        }
        if seen.insert((p.instruction.clone(), p.response.clone())) {
            out.push(p);
        }
    };
    for doc in corpus {
        let mut base = extract_faq_pairs(doc);
        base.extend(generate_template_pairs(doc, templates));
        for pair in base {
            let variants =
                if options.augment { augment_reformulations(&pair, &options.patterns) } else { Vec::new() };
            push(pair, &mut out);
            for v in variants {
                push(v, &mut out);
            }
        }
    }
    out
}
