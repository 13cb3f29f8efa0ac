use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::client::{Completion, Usage};
use super::prompt::PromptBundle;
use super::GenerationError;
use crate::retrieval::Context;

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r" ?\[(\d{1,3})\]").expect("marker regex"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub marker: usize,
    pub source_url: String,
    pub title: String,
    /// False when the source was only listed in the trailer.
    pub in_text: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub citations: Vec<Citation>,
    pub model_name: String,
    pub usage: Usage,
    pub abstained: bool,
}

/// Removes a leading copy of the rendered prompt, then a leading assistant cue.
pub fn strip_prompt<'a>(completion: &'a str, bundle: &PromptBundle) -> &'a str {
    let mut s = completion;
    if !bundle.rendered.is_empty() {
        if let Some(rest) = s.strip_prefix(bundle.rendered.as_str()) {
            s = rest;
        }
    }
    let trimmed = s.trim_start();
    if !bundle.assistant_cue.is_empty() {
        if let Some(rest) = trimmed.strip_prefix(bundle.assistant_cue.as_str()) {
            return rest.trim();
        }
    }
    trimmed.trim()
}

fn citation(marker: usize, ctx: &Context, in_text: bool) -> Citation {
    Citation {
        marker,
        source_url: ctx.doc_ref.source_url.clone(),
        title: ctx.doc_ref.title.clone(),
        in_text,
    }
}

/// Strips the prompt echo, resolves `[n]` markers against `contexts` and lists
/// uncited contexts under a `Sources:` trailer. Markers that resolve to no
/// context are removed from the text.
pub fn postprocess(
    completion: &Completion,
    bundle: &PromptBundle,
    contexts: &[Context],
    cannot_answer_clause: &str,
) -> Result<Answer, GenerationError> {
    let stripped = strip_prompt(&completion.text, bundle);
    if stripped.is_empty() {
        return Err(GenerationError::EmptyCompletion);
    }

    let mut cited: Vec<usize> = Vec::new();
    let text = MARKER.replace_all(stripped, |caps: &regex::Captures<'_>| {
        let n: usize = caps[1].parse().unwrap_or(0);
        if (1..=contexts.len()).contains(&n) {
            if !cited.contains(&n) {
                cited.push(n);
            }
            caps[0].to_string()
        } else {
            String::new()
        }
    });
    let mut text = text.trim().to_string();
    if text.is_empty() {
        return Err(GenerationError::EmptyCompletion);
    }

    let mut citations: Vec<Citation> = cited.iter().map(|&n| citation(n, &contexts[n - 1], true)).collect();
    let used: HashSet<usize> = cited.into_iter().collect();
    let uncited: Vec<usize> = (1..=contexts.len()).filter(|n| !used.contains(n)).collect();
    if !uncited.is_empty() {
        text.push_str("\n\nSources:");
        for n in uncited {
            let c = &contexts[n - 1];
            text.push_str(&format!("\n[{n}] {} ({})", c.doc_ref.title, c.doc_ref.source_url));
            citations.push(citation(n, c, false));
        }
    }

    let clause = cannot_answer_clause.trim().to_lowercase();
    let abstained = !clause.is_empty() && text.to_lowercase().contains(&clause);
    Ok(Answer { text, citations, model_name: completion.model.clone(), usage: completion.usage, abstained })
}
