//! Model-agnostic token segmentation.
//!
//! Tokens are the non-whitespace segments of Unicode word boundaries
//! (UAX #29). In practice:
//!
//! | input          | tokens                 |
//! |----------------|------------------------|
//! | `apply now`    | `apply`, `now`         |
//! | `B.S.`         | `B.S`, `.`             |
//! | `C.S.,`        | `C.S`, `.`, `,`        |
//! | `2024`         | `2024`                 |
//! | `don't`        | `don't`                |
//! | `3.5`          | `3.5`                  |
//!
//! Letters joined by `.` or `'` stay one token, a trailing `.` splits off,
//! and every other punctuation character is its own token.

use unicode_segmentation::UnicodeSegmentation;

/// A token with its byte range in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

pub fn token_spans(text: &str) -> Vec<TokenSpan<'_>> {
    text.split_word_bound_indices()
        .filter(|(_, s)| !s.chars().all(char::is_whitespace))
        .map(|(start, s)| TokenSpan { text: s, start, end: start + s.len() })
        .collect()
}

pub fn tokenize(text: &str) -> Vec<&str> {
    token_spans(text).into_iter().map(|t| t.text).collect()
}

pub fn token_count(text: &str) -> usize {
    text.split_word_bounds()
        .filter(|s| !s.chars().all(char::is_whitespace))
        .count()
}

/// `(tokens, count)` pair.
pub fn tokenize_count(text: &str) -> (Vec<String>, usize) {
    let tokens: Vec<String> = tokenize(text).into_iter().map(str::to_owned).collect();
    let n = tokens.len();
    (tokens, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_counts() {
        assert_eq!(tokenize_count("apply now").1, 2);
        assert_eq!(tokenize_count("").1, 0);
        assert_eq!(token_count("  \n "), 0);
    }

    #[test]
    fn degree_abbreviations_follow_rule_table() {
        // hand segmentation: "B.S" "." "in" "C.S" "." "," "fall" "2024"
        assert_eq!(
            tokenize("B.S. in C.S., fall 2024"),
            vec!["B.S", ".", "in", "C.S", ".", ",", "fall", "2024"]
        );
    }

    #[test]
    fn contractions_and_decimals() {
        assert_eq!(tokenize("don't pay 3.5%"), vec!["don't", "pay", "3.5", "%"]);
    }

    #[test]
    fn spans_point_into_source() {
        let text = "Apply  online, today";
        for t in token_spans(text) {
            assert_eq!(&text[t.start..t.end], t.text);
        }
    }
}
