//! Answer-string normalization and Levenshtein edit distance.
//!
//! Both the ensemble and the evaluator compare answers through this module,
//! so the two always agree on what "the same answer" means.

use serde::{Deserialize, Serialize};

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const TERMINAL_PUNCTUATION: [char; 4] = ['.', ',', '!', '?'];

/// Switches for [`normalize_answer`]. `Default` turns every rule on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationRules {
    pub lowercase: bool,
    pub trim_whitespace: bool,
    /// Removes trailing `.`, `,`, `!` and `?`.
    pub strip_terminal_punctuation: bool,
    pub collapse_internal_whitespace: bool,
    /// Removes the standalone lowercase tokens `a`, `an` and `the`.
    pub drop_articles: bool,
}

impl NormalizationRules {
    /// Every rule off: [`normalize_answer`] becomes the identity.
    pub const fn none() -> Self {
        Self {
            lowercase: false,
            trim_whitespace: false,
            strip_terminal_punctuation: false,
            collapse_internal_whitespace: false,
            drop_articles: false,
        }
    }

    pub const fn all() -> Self {
        Self {
            lowercase: true,
            trim_whitespace: true,
            strip_terminal_punctuation: true,
            collapse_internal_whitespace: true,
            drop_articles: true,
        }
    }

    /// All 32 flag combinations, in bit order.
    pub fn every_combination() -> impl Iterator<Item = Self> {
        (0u8..32).map(|bits| Self {
            lowercase: bits & 1 != 0,
            trim_whitespace: bits & 2 != 0,
            strip_terminal_punctuation: bits & 4 != 0,
            collapse_internal_whitespace: bits & 8 != 0,
            drop_articles: bits & 16 != 0,
        })
    }
}

impl Default for NormalizationRules {
    fn default() -> Self {
        Self::all()
    }
}

/// Normalizes an answer for comparison.
///
/// Rules run in the order trim, lowercase, strip terminal punctuation, drop
/// articles, collapse whitespace. The pass is repeated until the string stops
/// changing, because a later rule can expose work for an earlier one
/// (`"yes ."` only loses its trailing blank once the period is gone). After
/// the first pass only removals remain, so the loop terminates.
pub fn normalize_answer(s: &str, rules: &NormalizationRules) -> String {
    let mut current = normalize_once(s, rules);
    loop {
        let next = normalize_once(&current, rules);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn normalize_once(s: &str, rules: &NormalizationRules) -> String {
    let mut out = if rules.trim_whitespace {
        s.trim().to_string()
    } else {
        s.to_string()
    };
    if rules.lowercase {
        out = out.to_lowercase();
    }
    if rules.strip_terminal_punctuation {
        let kept = out.trim_end_matches(TERMINAL_PUNCTUATION).len();
        out.truncate(kept);
    }
    if rules.drop_articles {
        out = drop_articles(&out);
    }
    if rules.collapse_internal_whitespace {
        out = collapse_whitespace(&out);
    }
    out
}

/// Removes article tokens together with one adjacent separator, so the
/// remaining tokens stay separated and leading/trailing whitespace is left
/// as it was.
fn drop_articles(s: &str) -> String {
    // Alternating runs: separators[i] precedes tokens[i]; the final separator
    // trails the last token.
    let mut tokens: Vec<&str> = Vec::new();
    let mut separators: Vec<&str> = Vec::new();
    let mut rest = s;
    loop {
        let sep_len = rest
            .char_indices()
            .find(|(_, c)| !c.is_whitespace())
            .map_or(rest.len(), |(i, _)| i);
        separators.push(&rest[..sep_len]);
        rest = &rest[sep_len..];
        if rest.is_empty() {
            break;
        }
        let tok_len = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace())
            .map_or(rest.len(), |(i, _)| i);
        tokens.push(&rest[..tok_len]);
        rest = &rest[tok_len..];
    }
    if !tokens.iter().any(|t| ARTICLES.contains(t)) {
        return s.to_string();
    }

    let kept: Vec<usize> = (0..tokens.len())
        .filter(|&i| !ARTICLES.contains(&tokens[i]))
        .collect();
    let leading = separators[0];
    let trailing = separators[tokens.len()];
    let mut out = String::with_capacity(s.len());
    out.push_str(leading);
    for (pos, &i) in kept.iter().enumerate() {
        if pos > 0 {
            // Separator that originally preceded this token.
            out.push_str(separators[i]);
        }
        out.push_str(tokens[i]);
    }
    if !kept.is_empty() || leading.is_empty() {
        out.push_str(trailing);
    }
    out
}

fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_run = false;
    for c in s.chars() {
        if c.is_whitespace() {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            out.push(c);
            in_run = false;
        }
    }
    out
}

/// Levenshtein distance with unit costs, counted over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    // Keep the shorter string along the row.
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }

    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut curr = vec![0usize; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        curr[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let substitution = prev[j] + usize::from(lc != sc);
            curr[j + 1] = substitution.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}
