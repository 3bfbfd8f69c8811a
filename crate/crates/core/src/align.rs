//! Edit-distance alignment and the WER/CER scoring conventions.
//!
//! Per-sample error rates are computed against both the verbatim and the clean
//! reference and the smaller one is kept (ties go to the clean reference). The
//! unclipped value drives the hallucination flag; the clipped value (at 1.0) is
//! what gets averaged.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::Utterance;
use crate::textnorm::{normalize, NormalizationProfile, Role, TokenSeq};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("utterance `{0}`: both normalized references are empty")]
    EmptyReference(String),
    #[error("no samples to pool")]
    EmptyInput,
    #[error("pooled reference length is zero")]
    ZeroReferenceWords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Match,
    Sub,
    Del,
    Ins,
}

impl EditOp {
    fn code(self) -> char {
        match self {
            EditOp::Match => '=',
            EditOp::Sub => 'S',
            EditOp::Del => 'D',
            EditOp::Ins => 'I',
        }
    }

    fn from_code(c: char) -> Option<Self> {
        Some(match c {
            '=' => EditOp::Match,
            'S' => EditOp::Sub,
            'D' => EditOp::Del,
            'I' => EditOp::Ins,
            _ => return None,
        })
    }
}

/// Minimal unit-cost alignment of a hypothesis against a reference.
///
/// `hits + substitutions + deletions` is the reference length and
/// `hits + substitutions + insertions` the hypothesis length.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub hits: usize,
    /// Serialized compactly as a string of `=`, `S`, `D`, `I`.
    #[serde(serialize_with = "ops_to_string", deserialize_with = "ops_from_string")]
    pub ops: Vec<EditOp>,
}

fn ops_to_string<S: Serializer>(ops: &[EditOp], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&ops.iter().map(|o| o.code()).collect::<String>())
}

fn ops_from_string<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<EditOp>, D::Error> {
    let s = String::deserialize(d)?;
    s.chars()
        .map(|c| {
            EditOp::from_code(c)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid edit op `{c}`")))
        })
        .collect()
}

impl Alignment {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn ref_len(&self) -> usize {
        self.hits + self.substitutions + self.deletions
    }

    pub fn hyp_len(&self) -> usize {
        self.hits + self.substitutions + self.insertions
    }
}

/// Levenshtein DP with a deterministic backtrace: diagonal (match/sub) is
/// preferred, then deletion, then insertion.
fn align<T: PartialEq>(hyp: &[T], reference: &[T]) -> Alignment {
    let (n, m) = (reference.len(), hyp.len());
    let width = m + 1;
    let mut cost = vec![0u32; (n + 1) * width];
    for (j, c) in cost[..width].iter_mut().enumerate() {
        *c = j as u32;
    }
    for i in 1..=n {
        cost[i * width] = i as u32;
        for j in 1..=m {
            let diag = cost[(i - 1) * width + j - 1] + u32::from(reference[i - 1] != hyp[j - 1]);
            let del = cost[(i - 1) * width + j] + 1;
            let ins = cost[i * width + j - 1] + 1;
            cost[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut out = Alignment::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if here == cost[(i - 1) * width + j - 1] + u32::from(!same) {
                if same {
                    out.hits += 1;
                    out.ops.push(EditOp::Match);
                } else {
                    out.substitutions += 1;
                    out.ops.push(EditOp::Sub);
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == cost[(i - 1) * width + j] + 1 {
            out.deletions += 1;
            out.ops.push(EditOp::Del);
            i -= 1;
        } else {
            out.insertions += 1;
            out.ops.push(EditOp::Ins);
            j -= 1;
        }
    }
    out.ops.reverse();
    out
}

pub fn align_words(hyp: &TokenSeq, reference: &TokenSeq) -> Alignment {
    align(hyp.tokens(), reference.tokens())
}

/// Character-level alignment of the single-space renderings of two token sequences.
pub fn align_chars(hyp: &TokenSeq, reference: &TokenSeq) -> Alignment {
    let h: Vec<char> = hyp.render().chars().collect();
    let r: Vec<char> = reference.render().chars().collect();
    align(&h, &r)
}

/// `(S + D + I) / N`. With `N == 0` the raw rate is the hypothesis length
/// (0 for an empty hypothesis), which the clip convention caps at 1.0.
pub fn wer_from(alignment: &Alignment, ref_len: usize) -> f64 {
    debug_assert_eq!(ref_len, alignment.ref_len());
    if ref_len == 0 {
        return alignment.insertions as f64;
    }
    alignment.errors() as f64 / ref_len as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefKind {
    Verbatim,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    /// Dual-reference minimum, unclipped.
    pub wer_raw: f64,
    /// `min(wer_raw, 1.0)`.
    pub wer: f64,
    pub cer_raw: f64,
    pub cer: f64,
    pub chosen_ref: RefKind,
    /// Word alignment against `chosen_ref`.
    pub counts: Alignment,
    pub hallucinated: bool,
    /// Hypothesis tokens over clean-reference tokens.
    pub length_ratio: f64,
    pub ref_len: usize,
    #[serde(default)]
    pub semscore: Option<f64>,
}

/// Scores one hypothesis against an utterance's two references.
pub fn score_sample(
    hypothesis: &str,
    u: &Utterance,
    profile: &NormalizationProfile,
) -> Result<SampleScore, AlignError> {
    let hyp = normalize(hypothesis, Role::Hypothesis, profile);
    let verbatim = normalize(&u.verbatim_ref, Role::Reference, profile);
    let clean = normalize(&u.clean_ref, Role::Reference, profile);
    if verbatim.is_empty() && clean.is_empty() {
        return Err(AlignError::EmptyReference(u.utterance_id.clone()));
    }

    let score_words = |r: &TokenSeq| {
        let a = align_words(&hyp, r);
        let wer = wer_from(&a, r.len());
        (wer, a)
    };
    let (wer_v, align_v) = score_words(&verbatim);
    let (wer_c, align_c) = score_words(&clean);
    let (wer_raw, chosen_ref, counts, ref_len) = if wer_v < wer_c {
        (wer_v, RefKind::Verbatim, align_v, verbatim.len())
    } else {
        (wer_c, RefKind::Clean, align_c, clean.len())
    };
    if ref_len == 0 && !hyp.is_empty() {
        log::warn!(
            "utterance {}: empty normalized reference with non-empty hypothesis, WER clipped to 1.0",
            u.utterance_id
        );
    }

    let char_rate = |r: &TokenSeq| {
        let a = align_chars(&hyp, r);
        wer_from(&a, a.ref_len())
    };
    let cer_raw = char_rate(&verbatim).min(char_rate(&clean));

    let denom = if clean.is_empty() { verbatim.len() } else { clean.len() };
    Ok(SampleScore {
        wer_raw,
        wer: wer_raw.min(1.0),
        cer_raw,
        cer: cer_raw.min(1.0),
        chosen_ref,
        counts,
        hallucinated: wer_raw > 1.0,
        length_ratio: hyp.len() as f64 / denom as f64,
        ref_len,
        semscore: None,
    })
}

/// Pooled substitution/insertion/deletion/hit rates over total reference words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub sub_rate: f64,
    pub ins_rate: f64,
    pub del_rate: f64,
    pub hit_rate: f64,
}

impl ErrorDecomposition {
    /// Element-wise `self - base`.
    pub fn delta(&self, base: &ErrorDecomposition) -> ErrorDecomposition {
        ErrorDecomposition {
            sub_rate: self.sub_rate - base.sub_rate,
            ins_rate: self.ins_rate - base.ins_rate,
            del_rate: self.del_rate - base.del_rate,
            hit_rate: self.hit_rate - base.hit_rate,
        }
    }
}

pub fn pool_decomposition<'a, I>(scores: I) -> Result<ErrorDecomposition, AlignError>
where
    I: IntoIterator<Item = &'a SampleScore>,
{
    let (mut s, mut d, mut ins, mut h, mut n, mut count) = (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
    for score in scores {
        s += score.counts.substitutions;
        d += score.counts.deletions;
        ins += score.counts.insertions;
        h += score.counts.hits;
        n += score.ref_len;
        count += 1;
    }
    if count == 0 {
        return Err(AlignError::EmptyInput);
    }
    if n == 0 {
        return Err(AlignError::ZeroReferenceWords);
    }
    let n = n as f64;
    Ok(ErrorDecomposition {
        sub_rate: s as f64 / n,
        ins_rate: ins as f64 / n,
        del_rate: d as f64 / n,
        hit_rate: h as f64 / n,
    })
}
