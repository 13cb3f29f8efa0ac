use serde::{Deserialize, Serialize};

use super::tokenize::token_spans;
use crate::corpus::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkParams {
    pub max_tokens: usize,
    /// Target lower bound; sections shorter than this still form one chunk.
    pub min_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams { max_tokens: 512, min_tokens: 256, overlap_tokens: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkParamsError {
    #[error("chunk.max_tokens must be positive")]
    ZeroMax,
    #[error("chunk.overlap_tokens ({overlap}) must be less than chunk.max_tokens ({max})")]
    OverlapTooLarge { overlap: usize, max: usize },
    #[error("chunk.min_tokens ({min}) must not exceed chunk.max_tokens ({max})")]
    MinAboveMax { min: usize, max: usize },
}

impl ChunkParams {
    pub fn validate(&self) -> Result<(), ChunkParamsError> {
        if self.max_tokens == 0 {
            return Err(ChunkParamsError::ZeroMax);
        }
        if self.overlap_tokens >= self.max_tokens {
            return Err(ChunkParamsError::OverlapTooLarge {
                overlap: self.overlap_tokens,
                max: self.max_tokens,
            });
        }
        if self.min_tokens > self.max_tokens {
            return Err(ChunkParamsError::MinAboveMax { min: self.min_tokens, max: self.max_tokens });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.max_tokens - self.overlap_tokens
    }
}

/// Source linkage for a chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocRef {
    pub source_url: String,
    pub title: String,
    pub heading: String,
    pub section_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_ref: DocRef,
    pub text: String,
    /// Half-open token range within the section's token stream.
    pub token_span: [usize; 2],
}

impl Chunk {
    pub fn token_len(&self) -> usize {
        self.token_span[1] - self.token_span[0]
    }
}

/// Sliding-window spans over `n` tokens.
pub fn window_spans(n: usize, params: &ChunkParams) -> Vec<[usize; 2]> {
    let mut spans = Vec::new();
    if n == 0 {
        return spans;
    }
    let stride = params.stride();
    let mut start = 0;
    loop {
        let end = (start + params.max_tokens).min(n);
        spans.push([start, end]);
        if end == n {
            break;
        }
        start += stride;
    }
    spans
}

/// Stable chunk id: 16 hex chars of the document hash plus a per-document ordinal.
pub fn chunk_id(content_hash: &str, ordinal: usize) -> String {
    let prefix: String = content_hash.chars().take(16).collect();
    format!("{prefix}-{ordinal:04}")
}

/// Splits each section independently; chunks never cross section boundaries.
/// A document without sections is treated as one untitled section.
pub fn chunk_document(doc: &Document, params: &ChunkParams) -> Vec<Chunk> {
    let implicit;
    let sections: Vec<(&str, &str)> = if doc.sections.is_empty() {
        implicit = [("", doc.content.as_str())];
        implicit.to_vec()
    } else {
        doc.sections.iter().map(|s| (s.heading.as_str(), s.content.as_str())).collect()
    };

    let mut out = Vec::new();
    for (section_index, (heading, content)) in sections.into_iter().enumerate() {
        let tokens = token_spans(content);
        for span in window_spans(tokens.len(), params) {
            let text = &content[tokens[span[0]].start..tokens[span[1] - 1].end];
            out.push(Chunk {
                chunk_id: chunk_id(&doc.metadata.content_hash, out.len()),
                doc_ref: DocRef {
                    source_url: doc.source_url.clone(),
                    title: doc.title.clone(),
                    heading: heading.to_string(),
                    section_index,
                },
                text: text.to_string(),
                token_span: span,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Section;
    use chrono::NaiveDate;

    fn doc_with(sections: Vec<Section>) -> Document {
        Document::from_sections(
            "https://example.edu/a",
            "A",
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            "general",
            sections,
        )
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn short_section_is_one_chunk() {
        let d = doc_with(vec![Section { heading: "H".into(), content: words(100) }]);
        let chunks = chunk_document(&d, &ChunkParams::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_span, [0, 100]);
        assert_eq!(chunks[0].doc_ref.heading, "H");
    }

    #[test]
    fn thousand_tokens_stride_448() {
        let spans = window_spans(1000, &ChunkParams::default());
        assert_eq!(spans, vec![[0, 512], [448, 960], [896, 1000]]);
    }

    #[test]
    fn chunk_text_matches_span() {
        let d = doc_with(vec![Section { heading: String::new(), content: words(1000) }]);
        let chunks = chunk_document(&d, &ChunkParams::default());
        assert_eq!(chunks.len(), 3);
        assert!(chunks[1].text.starts_with("w448 "));
        assert!(chunks[1].text.ends_with(" w959"));
        assert!(chunks.iter().all(|c| c.token_len() <= 512));
        assert_eq!(chunks[2].chunk_id, chunk_id(&d.metadata.content_hash, 2));
    }

    #[test]
    fn sections_are_not_merged() {
        let d = doc_with(vec![
            Section { heading: "A".into(), content: words(10) },
            Section { heading: "B".into(), content: words(10) },
        ]);
        let chunks = chunk_document(&d, &ChunkParams::default());
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[1].doc_ref.section_index, 1);
        assert_eq!(chunks[1].token_span, [0, 10]);
    }

    #[test]
    fn heading_only_section_yields_nothing() {
        let d = doc_with(vec![Section { heading: "Only".into(), content: String::new() }]);
        assert!(chunk_document(&d, &ChunkParams::default()).is_empty());
    }

    #[test]
    fn params_validation() {
        let bad = ChunkParams { max_tokens: 64, overlap_tokens: 64, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ChunkParamsError::OverlapTooLarge { .. })));
        let bad = ChunkParams { max_tokens: 100, min_tokens: 200, overlap_tokens: 0 };
        assert!(matches!(bad.validate(), Err(ChunkParamsError::MinAboveMax { .. })));
        assert!(ChunkParams::default().validate().is_ok());
    }
}
