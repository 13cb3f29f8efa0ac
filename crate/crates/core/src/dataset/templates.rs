//! Question templates with `{title}`, `{heading}` and `{topic}` slots.
//!
//! `{topic}` is the section heading, or the document title for untitled
//! sections. A template using `{heading}` does not apply to sections
//! without a heading.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{InstructionPair, Strategy};
use crate::corpus::{Document, Section};
use crate::index::token_count;

pub const SLOTS: &[&str] = &["title", "heading", "topic"];

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([^{}]*)\}").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionTemplate {
    pub pattern: String,
    /// Applicable `content_type` tags; empty means every type.
    #[serde(default)]
    pub content_types: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemplateSet {
    pub min_response_tokens: usize,
    pub templates: Vec<QuestionTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let t = |p: &str, types: &[&str]| QuestionTemplate {
            pattern: p.to_string(),
            content_types: types.iter().map(|s| s.to_string()).collect(),
        };
        TemplateSet {
            min_response_tokens: 12,
            templates: vec![
                t("What are the {title}?", &["admissions", "academic_program", "policy"]),
                t("What should I know about {heading}?", &[]),
                t("Tell me about {topic}.", &[]),
            ],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("cannot read templates {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed templates {path}: {source}")]
    Yaml { path: String, source: serde_yaml::Error },
    #[error("template {index} ({pattern:?}): {detail}")]
    Invalid { index: usize, pattern: String, detail: String },
}

impl QuestionTemplate {
    pub fn slots(&self) -> Vec<&str> {
        SLOT.captures_iter(&self.pattern).map(|c| c.get(1).map(|m| m.as_str()).unwrap_or("")).collect()
    }

    pub fn applies_to(&self, content_type: &str) -> bool {
        self.content_types.is_empty() || self.content_types.iter().any(|t| t == content_type)
    }

    pub fn instantiate(&self, title: &str, section: &Section) -> Option<String> {
        let heading = section.heading.trim();
        let title = title.trim();
        let mut missing = false;
        let out = SLOT.replace_all(&self.pattern, |c: &regex::Captures<'_>| {
            let v = match &c[1] {
                "title" => title,
                "heading" => heading,
                _ => {
                    if heading.is_empty() {
                        title
                    } else {
                        heading
                    }
                }
            };
            // a topic ending in "?" would double the question mark
            let v = v.trim_end_matches(['?', '.', ':']);
            if v.is_empty() {
                missing = true;
            }
            v.to_string()
        });
        (!missing).then(|| out.into_owned())
    }
}

impl TemplateSet {
    pub fn validate(&self) -> Result<(), TemplateError> {
        for (index, t) in self.templates.iter().enumerate() {
            let invalid = |detail: String| TemplateError::Invalid { index, pattern: t.pattern.clone(), detail };
            if t.pattern.trim().is_empty() {
                return Err(invalid("empty pattern".into()));
            }
            for s in t.slots() {
                if !SLOTS.contains(&s) {
                    return Err(invalid(format!("unknown slot {{{s}}}; expected one of {SLOTS:?}")));
                }
            }
            let stripped = SLOT.replace_all(&t.pattern, "");
            if stripped.contains('{') || stripped.contains('}') {
                return Err(invalid("unbalanced brace".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io { path: p.clone(), source })?;
        let set: TemplateSet = serde_yaml::from_str(&text).map_err(|source| TemplateError::Yaml { path: p, source })?;
        set.validate()?;
        Ok(set)
    }
}

/// One pair per (applicable template, section). Sections whose content is
/// shorter than `min_response_tokens` are skipped.
pub fn generate_template_pairs(doc: &Document, set: &TemplateSet) -> Vec<InstructionPair> {
    let mut out = Vec::new();
    let fallback;
    let sections: &[Section] = if doc.sections.is_empty() {
        fallback = [Section { heading: String::new(), content: doc.content.clone() }];
        &fallback
    } else {
        &doc.sections
    };
    for t in set.templates.iter().filter(|t| t.applies_to(&doc.metadata.content_type)) {
        for s in sections {
            if token_count(&s.content) < set.min_response_tokens {
                continue;
            }
            if let Some(q) = t.instantiate(&doc.title, s) {
                out.push(InstructionPair::new(q, s.content.clone(), &doc.source_url, Strategy::Template, None));
            }
        }
    }
    out
}
