//! SemScore: weighted composite of entailment, contextual-embedding and
//! phonetic similarity, taken as the maximum over both references.
//!
//! The phonetic part is native (Soundex + Jaro-Winkler). The two neural parts
//! come from an external scorer reached through [`NeuralScorer`]; see
//! [`client`] for the JSON Lines transport.

pub mod client;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Utterance;
use crate::textnorm::{normalize, NormalizationProfile, Role, TokenSeq};

pub use client::ScorerClient;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("scorer request {id} timed out after {secs:.1}s")]
    Timeout { id: u64, secs: f64 },
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("scorer rejected request {id}: {message}")]
    Remote { id: u64, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemError {
    #[error("soundex input has no letters")]
    EmptyWord,
    #[error("utterance `{0}`: both normalized references are empty")]
    EmptyReference(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

// ---------------------------------------------------------------------------
// Phonetic sub-metric

fn soundex_class(c: u8) -> Option<u8> {
    Some(match c {
        b'B' | b'F' | b'P' | b'V' => b'1',
        b'C' | b'G' | b'J' | b'K' | b'Q' | b'S' | b'X' | b'Z' => b'2',
        b'D' | b'T' => b'3',
        b'L' => b'4',
        b'M' | b'N' => b'5',
        b'R' => b'6',
        _ => return None,
    })
}

/// Classic American Soundex. Non-letters are dropped; H and W do not break
/// a run of equal codes, vowels do.
pub fn soundex(word: &str) -> Result<String, SemError> {
    let letters: Vec<u8> = word
        .bytes()
        .filter(u8::is_ascii_alphabetic)
        .map(|b| b.to_ascii_uppercase())
        .collect();
    let (&first, rest) = letters.split_first().ok_or(SemError::EmptyWord)?;
    let mut code = vec![first];
    let mut last = soundex_class(first);
    for &c in rest {
        if code.len() == 4 {
            break;
        }
        match c {
            b'H' | b'W' => {}
            _ => {
                let class = soundex_class(c);
                if let Some(d) = class {
                    if class != last {
                        code.push(d);
                    }
                }
                last = class;
            }
        }
    }
    code.resize(4, b'0');
    Ok(String::from_utf8(code).expect("ascii"))
}

/// Jaro-Winkler similarity (prefix scale 0.1, prefix up to 4 characters).
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_hit = vec![false; a.len()];
    let mut b_hit = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_hit[j] && b[j] == *ca {
                a_hit[i] = true;
                b_hit[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_hit).filter(|(_, h)| **h).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_hit).filter(|(_, h)| **h).map(|(c, _)| c);
    let half_transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    let jaro = (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0;
    let prefix = a.iter().zip(&b).take(4).take_while(|(x, y)| x == y).count();
    jaro + prefix as f64 * 0.1 * (1.0 - jaro)
}

/// Space-joined Soundex codes of the tokens that contain letters.
pub fn soundex_sequence(seq: &TokenSeq) -> String {
    seq.tokens()
        .iter()
        .filter_map(|t| soundex(t).ok())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn phonetic_similarity(hyp: &TokenSeq, reference: &TokenSeq) -> f64 {
    jaro_winkler(&soundex_sequence(hyp), &soundex_sequence(reference))
}

// ---------------------------------------------------------------------------
// Composite

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubScores {
    /// Mean of the two entailment directions.
    pub nli: f64,
    /// Rescaled F1; may dip slightly below zero.
    pub bert: f64,
    pub phon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const IDENTITY: Bounds = Bounds { lo: 0.0, hi: 1.0 };

    fn normalize(self, x: f64) -> f64 {
        (x.clamp(self.lo, self.hi) - self.lo) / (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemWeights {
    pub nli: f64,
    pub bert: f64,
    pub phon: f64,
    pub nli_bounds: Bounds,
    pub bert_bounds: Bounds,
    pub phon_bounds: Bounds,
}

impl Default for SemWeights {
    fn default() -> Self {
        SemWeights {
            nli: 0.40,
            bert: 0.28,
            phon: 0.32,
            nli_bounds: Bounds::IDENTITY,
            bert_bounds: Bounds::IDENTITY,
            phon_bounds: Bounds::IDENTITY,
        }
    }
}

impl SemWeights {
    pub fn validate(&self) -> Result<(), SemError> {
        let sum = self.nli + self.bert + self.phon;
        if (sum - 1.0).abs() > 1e-9 || [self.nli, self.bert, self.phon].iter().any(|w| *w < 0.0) {
            return Err(SemError::InvalidWeights(format!("weights must be >= 0 and sum to 1, got {sum}")));
        }
        for (name, b) in [("nli", self.nli_bounds), ("bert", self.bert_bounds), ("phon", self.phon_bounds)] {
            if b.hi.is_nan() || b.lo.is_nan() || b.hi <= b.lo {
                return Err(SemError::InvalidWeights(format!("{name} bounds need hi > lo")));
            }
        }
        Ok(())
    }
}

/// Weighted sum of the min-max normalized sub-scores, on a 0-100 scale.
pub fn combine(sub: SubScores, w: &SemWeights) -> f64 {
    let nli = w.nli_bounds.normalize(sub.nli);
    let bert = w.bert_bounds.normalize(sub.bert.max(0.0));
    let phon = w.phon_bounds.normalize(sub.phon);
    100.0 * (w.nli * nli + w.bert * bert + w.phon * phon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SemMode {
    #[default]
    Full,
    /// Degraded mode without a neural scorer: the phonetic part carries all
    /// the weight, so the score is `100 * phon_normalized`.
    PhoneticOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreOp {
    Nli,
    Bert,
}

/// Source of the two neural sub-metrics.
pub trait NeuralScorer: Send + Sync {
    fn score(&self, op: ScoreOp, a: &str, b: &str) -> Result<f64, ScorerError>;

    /// Scores several requests; implementations may pipeline them.
    fn score_many(&self, requests: &[(ScoreOp, &str, &str)]) -> Vec<Result<f64, ScorerError>> {
        requests.iter().map(|(op, a, b)| self.score(*op, a, b)).collect()
    }
}

/// SemScore of one hypothesis: the maximum composite over the non-empty
/// normalized references.
pub fn semscore_sample(
    hypothesis: &str,
    u: &Utterance,
    norm: &NormalizationProfile,
    scorer: Option<&dyn NeuralScorer>,
    mode: SemMode,
    weights: &SemWeights,
) -> Result<f64, SemError> {
    let hyp = normalize(hypothesis, Role::Hypothesis, norm);
    let refs: Vec<TokenSeq> = [&u.verbatim_ref, &u.clean_ref]
        .into_iter()
        .map(|r| normalize(r, Role::Reference, norm))
        .filter(|r| !r.is_empty())
        .collect();
    if refs.is_empty() {
        return Err(SemError::EmptyReference(u.utterance_id.clone()));
    }

    let phon: Vec<f64> = refs.iter().map(|r| phonetic_similarity(&hyp, r)).collect();
    if mode == SemMode::PhoneticOnly {
        let best = phon.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok(100.0 * weights.phon_bounds.normalize(best));
    }
    let scorer = scorer.ok_or_else(|| {
        ScorerError::Unavailable("no scorer configured (use phonetic-only mode to run without one)".into())
    })?;

    let h = hyp.render();
    let rendered: Vec<String> = refs.iter().map(TokenSeq::render).collect();
    let neural: Vec<(f64, f64)> = if hyp.is_empty() {
        vec![(0.0, 0.0); refs.len()]
    } else {
        let mut requests = Vec::with_capacity(3 * refs.len());
        for r in &rendered {
            requests.push((ScoreOp::Nli, r.as_str(), h.as_str()));
            requests.push((ScoreOp::Nli, h.as_str(), r.as_str()));
            requests.push((ScoreOp::Bert, r.as_str(), h.as_str()));
        }
        let results = scorer.score_many(&requests).into_iter().collect::<Result<Vec<_>, _>>()?;
        results
            .chunks(3)
            .map(|c| ((c[0] + c[1]) / 2.0, c[2]))
            .collect()
    };
    Ok(neural
        .into_iter()
        .zip(phon)
        .map(|((nli, bert), phon)| combine(SubScores { nli, bert, phon }, weights))
        .fold(f64::NEG_INFINITY, f64::max))
}
