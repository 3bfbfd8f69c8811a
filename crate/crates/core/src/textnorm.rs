//! Reference/hypothesis text normalization applied before every metric.
//!
//! The pipeline is a documented rule set with loadable tables, so results are
//! reproducible without any external normalizer:
//!
//! 1. references only: strip one leading `[...]` prompt prefix
//! 2. lowercase
//! 3. drop parenthesized spans (`(um)`, `(w-)`, `(laughs)`), filler words and
//!    tokens ending in `-` (incomplete words)
//! 4. expand contractions
//! 5. British to American spelling
//! 6. spelled-out cardinals 0–999 and digit strings to canonical digits
//! 7. strip punctuation (apostrophes join, everything else splits)
//! 8. collapse whitespace
//! 9. hypotheses only: truncate to the word limit
//!
//! Steps 3–7 are repeated until the token list stops changing, which makes the
//! whole function idempotent (splitting `um-hmm` exposes a filler, `colour-blind`
//! exposes a British spelling, and so on).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_TABLES: &str = include_str!("../data/norm_tables.json");

#[derive(Debug, Error)]
pub enum NormError {
    #[error("invalid normalization table: {0}")]
    InvalidTable(String),
    #[error("cannot read normalization tables: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse normalization tables: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Hypothesis,
    Reference,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberMode {
    #[default]
    ToDigits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationProfile {
    pub filler_words: BTreeSet<String>,
    pub contraction_table: BTreeMap<String, String>,
    pub spelling_table: BTreeMap<String, String>,
    #[serde(default)]
    pub number_canonicalization: NumberMode,
    pub hypothesis_word_limit: usize,
}

/// Partial override file; absent sections keep the embedded defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableOverrides {
    filler_words: Option<BTreeSet<String>>,
    contraction_table: Option<BTreeMap<String, String>>,
    spelling_table: Option<BTreeMap<String, String>>,
    number_canonicalization: Option<NumberMode>,
    hypothesis_word_limit: Option<usize>,
}

impl Default for NormalizationProfile {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_TABLES).expect("embedded normalization tables are valid")
    }
}

impl NormalizationProfile {
    /// Applies a JSON override document on top of the defaults and validates the result.
    pub fn from_json(json: &str) -> Result<Self, NormError> {
        let o: TableOverrides = serde_json::from_str(json)?;
        let mut p = NormalizationProfile::default();
        if let Some(v) = o.filler_words {
            p.filler_words = v;
        }
        if let Some(v) = o.contraction_table {
            p.contraction_table = v;
        }
        if let Some(v) = o.spelling_table {
            p.spelling_table = v;
        }
        if let Some(v) = o.number_canonicalization {
            p.number_canonicalization = v;
        }
        if let Some(v) = o.hypothesis_word_limit {
            p.hypothesis_word_limit = v;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, NormError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), NormError> {
        if self.hypothesis_word_limit == 0 {
            return Err(NormError::InvalidTable("hypothesis_word_limit must be > 0".into()));
        }
        let lower = |k: &String| *k == k.to_lowercase();
        if let Some(k) = self.filler_words.iter().find(|k| !lower(k)) {
            return Err(NormError::InvalidTable(format!("filler `{k}` is not lowercase")));
        }
        for (name, table) in [
            ("contraction", &self.contraction_table),
            ("spelling", &self.spelling_table),
        ] {
            if let Some(k) = table.keys().find(|k| !lower(k)) {
                return Err(NormError::InvalidTable(format!("{name} key `{k}` is not lowercase")));
            }
            // A value that is itself a key would make the rules chain.
            for (k, v) in table {
                if let Some(w) = v.split_whitespace().find(|w| table.contains_key(*w)) {
                    return Err(NormError::InvalidTable(format!(
                        "{name} entry `{k}` expands to another key `{w}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered lowercase word tokens; no token is empty or contains whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Splits on whitespace, so the token invariants hold by construction.
    pub fn from_text(text: &str) -> Self {
        TokenSeq(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Tokens joined with single spaces.
    pub fn render(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn word_count(seq: &TokenSeq) -> usize {
    seq.len()
}

pub fn normalize(text: &str, role: Role, profile: &NormalizationProfile) -> TokenSeq {
    let mut s = text.replace(['\u{2019}', '\u{2018}', '\u{02bc}'], "'");
    if role == Role::Reference {
        s = strip_prompt_prefix(&s).to_string();
    }
    let s = remove_parenthesized(&s.to_lowercase());
    let mut tokens: Vec<String> = s.split_whitespace().map(str::to_string).collect();
    // Each pass only removes material or rewrites toward a table's image, so
    // this settles in a couple of iterations; the cap is a backstop.
    for _ in 0..16 {
        let next = token_pass(&tokens, profile);
        if next == tokens {
            break;
        }
        tokens = next;
    }
    if role == Role::Hypothesis {
        tokens.truncate(profile.hypothesis_word_limit);
    }
    TokenSeq(tokens)
}

fn strip_prompt_prefix(s: &str) -> &str {
    let trimmed = s.trim_start();
    if trimmed.starts_with('[') {
        if let Some(end) = trimmed.find(']') {
            return &trimmed[end + 1..];
        }
    }
    s
}

/// Blanks out every balanced `(...)` span. Stray parentheses become spaces and
/// their surroundings are kept.
fn remove_parenthesized(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut drop = vec![false; chars.len()];
    let mut open = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '(' => open.push(i),
            ')' => match open.pop() {
                Some(start) => drop[start..=i].iter_mut().for_each(|d| *d = true),
                None => drop[i] = true,
            },
            _ => {}
        }
    }
    for i in open {
        drop[i] = true;
    }
    chars
        .iter()
        .zip(&drop)
        .map(|(&c, &d)| if d { ' ' } else { c })
        .collect()
}

/// Leading and trailing punctuation around the word core of a raw token.
struct Parts<'a> {
    prefix: &'a str,
    core: &'a str,
    suffix: &'a str,
}

fn split_parts(tok: &str) -> Parts<'_> {
    let keep = |c: char| c.is_alphanumeric();
    let start = tok.find(keep).unwrap_or(tok.len());
    let end = tok.rfind(keep).map_or(start, |i| i + tok[i..].chars().next().unwrap().len_utf8());
    Parts {
        prefix: &tok[..start],
        core: &tok[start..end],
        suffix: &tok[end..],
    }
}

fn is_incomplete(tok: &str) -> bool {
    tok.trim_end_matches(|c: char| !c.is_alphanumeric() && c != '-')
        .ends_with('-')
}

fn token_pass(tokens: &[String], profile: &NormalizationProfile) -> Vec<String> {
    // 3: fillers and incomplete words
    let kept = tokens.iter().filter(|t| {
        let core = split_parts(t).core;
        !(is_incomplete(t) || profile.filler_words.contains(core))
    });

    // 4 + 5: contractions, then spellings, on the word core
    let mut expanded: Vec<String> = Vec::with_capacity(tokens.len());
    for tok in kept {
        let Parts { prefix, core, suffix } = split_parts(tok);
        match profile.contraction_table.get(core) {
            Some(exp) => {
                let words: Vec<&str> = exp.split_whitespace().collect();
                let last = words.len().saturating_sub(1);
                for (i, w) in words.iter().enumerate() {
                    let w = profile.spelling_table.get(*w).map_or(*w, String::as_str);
                    let pre = if i == 0 { prefix } else { "" };
                    let suf = if i == last { suffix } else { "" };
                    expanded.push(format!("{pre}{w}{suf}"));
                }
            }
            None => {
                let core = profile.spelling_table.get(core).map_or(core, String::as_str);
                expanded.push(format!("{prefix}{core}{suffix}"));
            }
        }
    }

    // 6: numbers
    let numbered = canonicalize_numbers(&expanded);

    // 7 + 8: punctuation and whitespace
    let mut out = Vec::with_capacity(numbered.len());
    for tok in &numbered {
        let cleaned: String = tok
            .chars()
            .filter(|&c| c != '\'')
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        out.extend(cleaned.split_whitespace().map(str::to_string));
    }
    out
}

const UNITS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

fn unit_value(w: &str) -> Option<u32> {
    UNITS.iter().position(|&u| u == w).map(|i| i as u32)
}

fn tens_value(w: &str) -> Option<u32> {
    TENS.iter().position(|&t| t == w).map(|i| 20 + 10 * i as u32)
}

fn is_number_word(w: &str) -> bool {
    unit_value(w).is_some() || tens_value(w).is_some() || w == "hundred"
}

/// A word taking part in spelled-number parsing.
struct NumWord<'a> {
    word: &'a str,
    /// Punctuation before this word prevents joining it to the previous one.
    break_before: bool,
    /// Index of the raw token this word came from.
    source: usize,
}

/// `[1-9] hundred [and] [below-100] | below-100`, never crossing a break.
/// Returns the value and the number of words consumed.
fn parse_cardinal(words: &[NumWord<'_>]) -> Option<(u32, usize)> {
    let joined = |i: usize| words.get(i).filter(|w| !w.break_before);
    let below_100 = |i: usize, first: bool| -> Option<(u32, usize)> {
        let w = if first { words.get(i)? } else { joined(i)? };
        if let Some(t) = tens_value(w.word) {
            match joined(i + 1).and_then(|n| unit_value(n.word)) {
                Some(u) if u > 0 => Some((t + u, 2)),
                _ => Some((t, 1)),
            }
        } else {
            unit_value(w.word).map(|u| (u, 1))
        }
    };

    let lead = unit_value(words.first()?.word);
    if let (Some(h @ 1..=9), Some(next)) = (lead, joined(1)) {
        if next.word == "hundred" {
            let mut value = h * 100;
            let mut used = 2;
            let and = joined(2).is_some_and(|w| w.word == "and");
            let rest_at = if and { 3 } else { 2 };
            if let Some((v, n)) = below_100(rest_at, false).filter(|&(v, _)| v > 0) {
                value += v;
                used = rest_at + n;
            }
            return Some((value, used));
        }
    }
    below_100(0, true)
}

fn canonical_digits(core: &str) -> Option<String> {
    let grouped = {
        let mut groups = core.split(',');
        let head = groups.next().unwrap_or("");
        let rest: Vec<&str> = groups.collect();
        !rest.is_empty()
            && (1..=3).contains(&head.len())
            && head.bytes().all(|b| b.is_ascii_digit())
            && rest
                .iter()
                .all(|g| g.len() == 3 && g.bytes().all(|b| b.is_ascii_digit()))
    };
    let digits: String = if grouped {
        core.chars().filter(|&c| c != ',').collect()
    } else if !core.is_empty() && core.bytes().all(|b| b.is_ascii_digit()) {
        core.to_string()
    } else {
        return None;
    };
    let trimmed = digits.trim_start_matches('0');
    Some(if trimmed.is_empty() { "0".into() } else { trimmed.into() })
}

fn canonicalize_numbers(tokens: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let core = split_parts(&tokens[i]).core;
        if let Some(d) = canonical_digits(core) {
            let p = split_parts(&tokens[i]);
            out.push(format!("{}{d}{}", p.prefix, p.suffix));
            i += 1;
            continue;
        }
        let first_parts: Vec<&str> = core.split('-').collect();
        if !first_parts.iter().all(|w| is_number_word(w)) {
            out.push(tokens[i].clone());
            i += 1;
            continue;
        }

        // Collect the maximal run of number-ish words starting here.
        let mut words: Vec<NumWord<'_>> = Vec::new();
        let mut j = i;
        let mut prev_suffix_break = false;
        while j < tokens.len() {
            let p = split_parts(&tokens[j]);
            let parts: Vec<&str> = p.core.split('-').collect();
            let numeric = parts.iter().all(|w| is_number_word(w));
            let is_and = p.core == "and";
            if !(numeric || (is_and && j > i)) {
                break;
            }
            let break_here = j > i && (prev_suffix_break || !p.prefix.is_empty());
            for (k, w) in parts.iter().enumerate() {
                words.push(NumWord {
                    word: w,
                    break_before: k == 0 && break_here,
                    source: j,
                });
            }
            prev_suffix_break = !p.suffix.is_empty();
            j += 1;
        }

        let mut w = 0;
        let mut emitted_through = i;
        while w < words.len() {
            match parse_cardinal(&words[w..]) {
                Some((value, used)) => {
                    let first_src = words[w].source;
                    let last_src = words[w + used - 1].source;
                    let pre = split_parts(&tokens[first_src]).prefix;
                    let suf = split_parts(&tokens[last_src]).suffix;
                    out.push(format!("{pre}{value}{suf}"));
                    w += used;
                    emitted_through = last_src + 1;
                }
                None => {
                    // `hundred` or a dangling `and`: keep the raw token.
                    let src = words[w].source;
                    if src >= emitted_through {
                        out.push(tokens[src].clone());
                        emitted_through = src + 1;
                    }
                    w += 1;
                }
            }
        }
        i = j;
    }
    out
}
