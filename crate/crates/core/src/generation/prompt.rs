use serde::{Deserialize, Serialize};

use crate::index::token_count;
use crate::retrieval::Context;

pub const DEFAULT_SYSTEM_TEXT: &str = "You are a helpful assistant for Texas A&M University-San Antonio. \
Use the following information to answer the user's question accurately and completely. \
If you cannot answer based on the provided information, say so clearly.";

/// Sentence appended to a custom system text that lacks the abstention clause
/// when no context was retrieved.
pub const ABSTAIN_SENTENCE: &str = "If you cannot answer based on the provided information, say so clearly.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFormat {
    #[default]
    RagChat,
    SftInstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PersonaConfig {
    pub system_text: String,
    pub user_label: String,
    pub assistant_cue: String,
    /// Substring whose presence in a reply marks it as an abstention.
    pub cannot_answer_clause: String,
    /// Upper bound on rendered prompt size, in tokenizer tokens.
    pub context_budget_tokens: usize,
}

impl Default for PersonaConfig {
    fn default() -> Self {
        PersonaConfig {
            system_text: DEFAULT_SYSTEM_TEXT.to_string(),
            user_label: "You:".to_string(),
            assistant_cue: "TAMUSA Bot:".to_string(),
            cannot_answer_clause: "cannot answer based on the provided information".to_string(),
            context_budget_tokens: 3072,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub marker: usize,
    pub source_url: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub context_blocks: Vec<ContextBlock>,
    pub user_text: String,
    pub assistant_cue: String,
    pub rendered: String,
    pub format: PromptFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("prompt needs {needed} tokens, budget is {budget}; drop context blocks {drop:?}")]
    ContextOverflow { needed: usize, budget: usize, drop: Vec<usize> },
}

fn render_blocks(blocks: &[ContextBlock]) -> String {
    let mut s = String::new();
    for b in blocks {
        s.push_str(&format!("[{}] (source: {})\n{}\n\n", b.marker, b.source_url, b.text));
    }
    s
}

impl PromptBundle {
    fn render(system: &str, blocks: &[ContextBlock], user_line: &str, cue: &str) -> String {
        format!("{system}\n\n{}{user_line}\n{cue}", render_blocks(blocks))
    }

    /// The user-turn part of the prompt: everything after the system text.
    pub fn user_message(&self) -> String {
        match self.format {
            PromptFormat::SftInstruction => self.rendered.clone(),
            PromptFormat::RagChat => self.rendered[self.system_text.len()..].trim_start().to_string(),
        }
    }
}

/// Renders `rag_chat` as system text, numbered context blocks, the user line
/// and the assistant cue; `sft_instruction` as `Instruction: <q>\nResponse:`.
pub fn assemble_prompt(
    query: &str,
    contexts: &[Context],
    format: PromptFormat,
    persona: &PersonaConfig,
) -> Result<PromptBundle, PromptError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(PromptError::EmptyQuery);
    }
    if format == PromptFormat::SftInstruction {
        return Ok(PromptBundle {
            system_text: String::new(),
            context_blocks: Vec::new(),
            user_text: query.to_string(),
            assistant_cue: "Response:".to_string(),
            rendered: format!("Instruction: {query}\nResponse:"),
            format,
        });
    }

    let mut system = persona.system_text.clone();
    let clause = persona.cannot_answer_clause.to_lowercase();
    if contexts.is_empty() && !system.to_lowercase().contains(&clause) {
        system = format!("{} {ABSTAIN_SENTENCE}", system.trim_end());
    }
    let blocks: Vec<ContextBlock> = contexts
        .iter()
        .enumerate()
        .map(|(i, c)| ContextBlock {
            marker: i + 1,
            source_url: c.doc_ref.source_url.clone(),
            title: c.doc_ref.title.clone(),
            text: c.text.clone(),
        })
        .collect();
    let user_line = format!("{} {query}", persona.user_label);
    let rendered = PromptBundle::render(&system, &blocks, &user_line, &persona.assistant_cue);

    let needed = token_count(&rendered);
    if needed > persona.context_budget_tokens {
        let mut drop = Vec::new();
        let mut kept = blocks.clone();
        while let Some(b) = kept.pop() {
            drop.push(b.marker);
            let r = PromptBundle::render(&system, &kept, &user_line, &persona.assistant_cue);
            if token_count(&r) <= persona.context_budget_tokens {
                break;
            }
        }
        return Err(PromptError::ContextOverflow { needed, budget: persona.context_budget_tokens, drop });
    }

    Ok(PromptBundle {
        system_text: system,
        context_blocks: blocks,
        user_text: query.to_string(),
        assistant_cue: persona.assistant_cue.clone(),
        rendered,
        format,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::DocRef;
    use crate::retrieval::ScoredChunk;

    pub(crate) fn ctx(url: &str, text: &str) -> Context {
        Context {
            scores: ScoredChunk {
                chunk_id: format!("{url}#0"),
                dense_score: Some(0.5),
                sparse_score: None,
                fused_score: 1.0 / 61.0,
                rerank_score: Some(1.0),
                final_rank: 1,
            },
            text: text.to_string(),
            doc_ref: DocRef { source_url: url.to_string(), title: "T".into(), heading: String::new(), section_index: 0 },
        }
    }

    #[test]
    fn sft_instruction_is_byte_exact() {
        let b = assemble_prompt("hi", &[], PromptFormat::SftInstruction, &PersonaConfig::default()).unwrap();
        assert_eq!(b.rendered, "Instruction: hi\nResponse:");
        assert!(b.context_blocks.is_empty());
    }

    #[test]
    fn rag_chat_without_context() {
        let b = assemble_prompt("When is orientation?", &[], PromptFormat::RagChat, &PersonaConfig::default()).unwrap();
        assert_eq!(b.rendered, format!("{DEFAULT_SYSTEM_TEXT}\n\nYou: When is orientation?\nTAMUSA Bot:"));
        assert!(!b.rendered.contains("(source:"));
    }

    #[test]
    fn rag_chat_golden_two_contexts() {
        let c = [ctx("https://u.edu/a", "Alpha text."), ctx("https://u.edu/b", "Beta text.")];
        let b = assemble_prompt("q?", &c, PromptFormat::RagChat, &PersonaConfig::default()).unwrap();
        let want = format!(
            "{DEFAULT_SYSTEM_TEXT}\n\n[1] (source: https://u.edu/a)\nAlpha text.\n\n\
             [2] (source: https://u.edu/b)\nBeta text.\n\nYou: q?\nTAMUSA Bot:"
        );
        assert_eq!(b.rendered, want);
        assert_eq!(b.user_message(), want[DEFAULT_SYSTEM_TEXT.len() + 2..]);
    }

    #[test]
    fn custom_system_gains_abstention_without_context() {
        let persona = PersonaConfig { system_text: "Be brief.".into(), ..Default::default() };
        let b = assemble_prompt("q", &[], PromptFormat::RagChat, &persona).unwrap();
        assert_eq!(b.system_text, format!("Be brief. {ABSTAIN_SENTENCE}"));
        let with = assemble_prompt("q", &[ctx("https://u.edu/a", "x")], PromptFormat::RagChat, &persona).unwrap();
        assert_eq!(with.system_text, "Be brief.");
    }

    #[test]
    fn overflow_lists_lowest_ranked_blocks() {
        let long = "word ".repeat(60);
        let c = [ctx("https://u.edu/a", &long), ctx("https://u.edu/b", &long), ctx("https://u.edu/c", &long)];
        let persona = PersonaConfig { context_budget_tokens: 150, ..Default::default() };
        match assemble_prompt("q", &c, PromptFormat::RagChat, &persona) {
            Err(PromptError::ContextOverflow { drop, .. }) => assert_eq!(drop, vec![3, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_rendering() {
        let c = [ctx("https://u.edu/a", "Alpha.")];
        let p = PersonaConfig::default();
        let a = assemble_prompt("q", &c, PromptFormat::RagChat, &p).unwrap();
        let b = assemble_prompt("q", &c, PromptFormat::RagChat, &p).unwrap();
        assert_eq!(a, b);
    }
}
