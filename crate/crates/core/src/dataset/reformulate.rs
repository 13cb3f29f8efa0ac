//! Instruction rewrites from a fixed pattern table.
//!
//! Each [`VariantPattern`] matches a whole instruction (case-insensitive) and
//! lists rewrites. In a rewrite, `$1`.. insert captures and `$g1`.. insert a
//! capture with its first word turned into a gerund ("apply for aid" ->
//! "applying for aid").

use regex::Regex;

use super::{InstructionPair, Strategy};

#[derive(Debug, Clone)]
pub struct VariantPattern {
    pub matcher: Regex,
    pub rewrites: Vec<String>,
}

impl VariantPattern {
    pub fn new(pattern: &str, rewrites: &[&str]) -> Result<Self, regex::Error> {
        Ok(VariantPattern {
            matcher: Regex::new(&format!("(?i)^{pattern}$"))?,
            rewrites: rewrites.iter().map(|s| s.to_string()).collect(),
        })
    }
}

/// The built-in table of interrogative and imperative rewrites.
pub fn default_patterns() -> Vec<VariantPattern> {
    let p = |pat: &str, rw: &[&str]| VariantPattern::new(pat, rw).expect("built-in pattern");
    vec![
        p(
            r"how (?:do|can) i (.+?)\s*\?",
            &["How can I $1?", "What is the process to $1?", "Tell me about $g1", "Explain how to $1."],
        ),
        p(r"what (?:is|are) (.+?)\s*\?", &["Tell me about $1.", "Can you explain $1?", "I'd like to know about $1."]),
        p(r"(?:can|may) i (.+?)\s*\?", &["Is it possible to $1?", "Am I allowed to $1?"]),
        p(r"where (?:do|can) i (.+?)\s*\?", &["Where should I go to $1?", "Tell me where to $1."]),
        p(r"when (?:is|are) (.+?)\s*\?", &["What is the date of $1?", "Tell me when $1 is."]),
        p(r"tell me about (.+?)\.?", &["What can you tell me about $1?", "What should I know about $1?"]),
    ]
}

/// Verbs with stress on the last syllable, which double their final consonant.
const DOUBLING: &[&str] = &["submit", "admit", "commit", "permit", "refer", "transfer", "prefer", "occur", "regret"];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Present participle of a regular English verb.
pub fn gerund(verb: &str) -> String {
    let v = verb.to_lowercase();
    let chars: Vec<char> = v.chars().collect();
    let n = chars.len();
    if n == 0 || v.ends_with("ing") {
        return verb.to_string();
    }
    if v == "be" {
        return "being".to_string();
    }
    if v.ends_with("ie") {
        return format!("{}ying", &verb[..verb.len() - 2]);
    }
    if v.ends_with('e') && !v.ends_with("ee") && !v.ends_with("ye") && !v.ends_with("oe") && n > 2 {
        return format!("{}ing", &verb[..verb.len() - 1]);
    }
    let cvc = n >= 3
        && !is_vowel(chars[n - 1])
        && !matches!(chars[n - 1], 'w' | 'x' | 'y')
        && is_vowel(chars[n - 2])
        && !is_vowel(chars[n - 3]);
    if cvc && (n <= 4 || DOUBLING.contains(&v.as_str())) {
        return format!("{verb}{}ing", chars[n - 1]);
    }
    format!("{verb}ing")
}

fn gerund_phrase(phrase: &str) -> String {
    match phrase.split_once(' ') {
        Some((first, rest)) => format!("{} {rest}", gerund(first)),
        None => gerund(phrase),
    }
}

fn render(rewrite: &str, caps: &regex::Captures<'_>) -> String {
    let mut out = String::new();
    let mut rest = rewrite;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        let (ger, tail) = match tail.strip_prefix('g') {
            Some(t) if t.starts_with(|c: char| c.is_ascii_digit()) => (true, t),
            _ => (false, tail),
        };
        let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            out.push('$');
            rest = tail;
            continue;
        }
        let value = digits.parse::<usize>().ok().and_then(|i| caps.get(i)).map(|m| m.as_str()).unwrap_or("");
        out.push_str(&if ger { gerund_phrase(value) } else { value.to_string() });
        rest = &tail[digits.len()..];
    }
    out.push_str(rest);
    out
}

fn key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase().trim_end_matches(['?', '.', '!']).to_string()
}

/// One reformulation per applicable rewrite, in table order, sharing the
/// parent's response and pointing at it by id. Rewrites equal to the
/// original instruction or to an earlier variant are suppressed.
pub fn augment_reformulations(pair: &InstructionPair, patterns: &[VariantPattern]) -> Vec<InstructionPair> {
    let original = pair.instruction.trim();
    let mut seen = vec![key(original)];
    let mut out = Vec::new();
    let parent = pair.id();
    for p in patterns {
        let Some(caps) = p.matcher.captures(original) else { continue };
        for rw in &p.rewrites {
            let text = render(rw, &caps);
            let k = key(&text);
            if k.is_empty() || seen.contains(&k) {
                continue;
            }
            seen.push(k);
            out.push(InstructionPair::new(
                text,
                pair.response.clone(),
                &pair.source_url,
                Strategy::Reformulation,
                Some(parent.clone()),
            ));
        }
    }
    out
}
