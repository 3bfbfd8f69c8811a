//! Paired comparisons, signed-rank tests, bootstrap intervals, FDR control and
//! correlation summaries.
//!
//! Sign convention throughout: differences are `treat - base`, so for error
//! rates a positive difference is a degradation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("input is constant; correlation undefined")]
    ConstantInput,
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("quantile {0} outside [0, 100]")]
    InvalidQuantile(f64),
    #[error("relative change needs a positive base, got {0}")]
    ZeroBase(f64),
    #[error("need at least two speakers, got {0}")]
    FewerThanTwoSpeakers(usize),
    #[error("non-finite value in input")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Number of bootstrap resamples used for speaker-level intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

// ---------------------------------------------------------------------------
// Effect sizes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectLabel {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectLabel {
    /// Cohen's conventional cutoffs on |d|: 0.2, 0.5, 0.8.
    pub fn from_d(d: f64) -> Self {
        match d.abs() {
            a if a < 0.2 => EffectLabel::Negligible,
            a if a < 0.5 => EffectLabel::Small,
            a if a < 0.8 => EffectLabel::Medium,
            _ => EffectLabel::Large,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EffectLabel::Negligible => "negligible",
            EffectLabel::Small => "small",
            EffectLabel::Medium => "medium",
            EffectLabel::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n: usize,
    pub delta_mean: f64,
    /// `None` when every difference is the same nonzero value (d undefined).
    pub cohen_d: Option<f64>,
    pub effect_label: Option<EffectLabel>,
    /// Two-sided Wilcoxon signed-rank p over the per-sample differences.
    pub p_raw: f64,
    pub p_adjusted: Option<f64>,
    /// Share of samples whose value strictly increased.
    pub degraded_pct: f64,
    pub ci95: Option<(f64, f64)>,
}

pub fn paired_summary(base: &[f64], treat: &[f64]) -> Result<PairedComparison> {
    if base.len() != treat.len() {
        return Err(StatsError::LengthMismatch(base.len(), treat.len()));
    }
    if base.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(base)?;
    check_finite(treat)?;
    let diffs: Vec<f64> = treat.iter().zip(base).map(|(t, b)| t - b).collect();
    let n = diffs.len();
    let delta_mean = mean(&diffs);
    let cohen_d = if diffs.iter().all(|d| *d == 0.0) {
        Some(0.0)
    } else if n < 2 {
        None
    } else {
        let var = diffs.iter().map(|d| (d - delta_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        (sd > 1e-12 * delta_mean.abs().max(1e-12)).then(|| delta_mean / sd)
    };
    let degraded = treat.iter().zip(base).filter(|(t, b)| t > b).count();
    Ok(PairedComparison {
        n,
        delta_mean,
        cohen_d,
        effect_label: cohen_d.map(EffectLabel::from_d),
        p_raw: wilcoxon_signed_rank(&diffs)?,
        p_adjusted: None,
        degraded_pct: 100.0 * degraded as f64 / n as f64,
        ci95: None,
    })
}

// ---------------------------------------------------------------------------
// Ranks and the signed-rank test

/// 1-based average ranks; values within `tol` (relative) of their sorted
/// neighbour share a rank.
fn average_ranks(values: &[f64], tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() {
            let (prev, cur) = (values[order[j - 1]], values[order[j]]);
            if (cur - prev).abs() > tol * prev.abs().max(cur.abs()).max(1.0) {
                break;
            }
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

const EXACT_MAX_N: usize = 25;
const ZERO_TOL: f64 = 1e-12;

/// Two-sided Wilcoxon signed-rank p-value. Zero differences are dropped and
/// tied magnitudes share average ranks. Exact null distribution for up to 25
/// nonzero differences, normal approximation (tie- and continuity-corrected)
/// above that. All-zero input gives p = 1.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<f64> {
    check_finite(diffs)?;
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| d.abs() > ZERO_TOL).collect();
    if nz.is_empty() {
        return Ok(1.0);
    }
    let mags: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&mags, ZERO_TOL);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();

    if n <= EXACT_MAX_N {
        // doubled average ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let w = (2.0 * w_plus).round() as usize;
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
        let upper: f64 = counts[w..].iter().sum::<f64>() / all;
        return Ok((2.0 * lower.min(upper)).min(1.0));
    }

    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((w_plus - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok((2.0 * std_normal().sf(z)).min(1.0))
}

// ---------------------------------------------------------------------------
// Speaker-level test and bootstrap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerLevelResult {
    pub n_speakers: usize,
    /// Mean over speakers of (treat mean - base mean).
    pub mean_diff: f64,
    pub p: f64,
    pub ci95: (f64, f64),
    /// Per-speaker `(base mean, treat mean)`, keyed by speaker id.
    pub speaker_means: BTreeMap<String, (f64, f64)>,
}

/// Percentile-bootstrap 95% interval for the mean of `values`.
///
/// Resample `r` draws from its own ChaCha stream (`seed`, stream `r`), so the
/// parallel result equals the serial one bit for bit.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(values)?;
    let n = values.len();
    let means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    Ok((percentile(&means, 2.5)?, percentile(&means, 97.5)?))
}

/// Collapses matched samples to per-speaker means, then runs the signed-rank
/// test and a bootstrap interval over speaker differences.
pub fn speaker_level_test<S: AsRef<str>>(
    base: &[f64],
    treat: &[f64],
    speakers: &[S],
    seed: u64,
) -> Result<SpeakerLevelResult> {
    if base.len() != treat.len() {
        return Err(StatsError::LengthMismatch(base.len(), treat.len()));
    }
    if base.len() != speakers.len() {
        return Err(StatsError::LengthMismatch(base.len(), speakers.len()));
    }
    check_finite(base)?;
    check_finite(treat)?;
    let mut acc: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((b, t), s) in base.iter().zip(treat).zip(speakers) {
        let e = acc.entry(s.as_ref().to_string()).or_default();
        e.0.push(*b);
        e.1.push(*t);
    }
    if acc.len() < 2 {
        return Err(StatsError::FewerThanTwoSpeakers(acc.len()));
    }
    // summing in sorted order keeps the means independent of input order
    let sorted_mean = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        mean(&xs)
    };
    let speaker_means: BTreeMap<String, (f64, f64)> = acc
        .into_iter()
        .map(|(s, (b, t))| (s, (sorted_mean(b), sorted_mean(t))))
        .collect();
    let diffs: Vec<f64> = speaker_means.values().map(|(b, t)| t - b).collect();
    Ok(SpeakerLevelResult {
        n_speakers: diffs.len(),
        mean_diff: mean(&diffs),
        p: wilcoxon_signed_rank(&diffs)?,
        ci95: bootstrap_mean_ci(&diffs, BOOTSTRAP_RESAMPLES, seed)?,
        speaker_means,
    })
}

// ---------------------------------------------------------------------------
// Multiple comparisons

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_fdr(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::InvalidP(bad));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        running = running.min(pvalues[i] * m as f64 / (pos + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

// ---------------------------------------------------------------------------
// Correlation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub pearson_r: f64,
    pub r_squared: f64,
    pub n: usize,
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(x)?;
    check_finite(y)?;
    pearson_unchecked(x, y)
}

/// Spearman's rho (Pearson on average ranks) with a t-approximation p-value,
/// plus the raw Pearson r and r².
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewPoints { need: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let (rx, _) = average_ranks(x, 0.0);
    let (ry, _) = average_ranks(y, 0.0);
    let rho = pearson_unchecked(&rx, &ry)?;
    let r = pearson_unchecked(x, y)?;
    let df = (x.len() - 2) as f64;
    let spearman_p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(CorrelationReport {
        spearman_rho: rho,
        spearman_p,
        pearson_r: r,
        r_squared: r * r,
        n: x.len(),
    })
}

fn ols_r2(y: &DVector<f64>, columns: &[&[f64]]) -> Result<f64> {
    let n = y.len();
    let x = DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let beta = x
        .clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|_| StatsError::ConstantInput)?;
    let resid = y - &x * beta;
    let my = y.mean();
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sst == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok(1.0 - resid.norm_squared() / sst)
}

/// R² gained by adding `predictor` to an OLS model of `y` on `baseline` alone.
pub fn incremental_r2(y: &[f64], baseline: &[f64], predictor: &[f64]) -> Result<f64> {
    for other in [baseline, predictor] {
        if other.len() != y.len() {
            return Err(StatsError::LengthMismatch(y.len(), other.len()));
        }
    }
    if y.len() < 4 {
        return Err(StatsError::TooFewPoints { need: 4, got: y.len() });
    }
    for xs in [y, baseline, predictor] {
        check_finite(xs)?;
    }
    let yv = DVector::from_column_slice(y);
    let reduced = ols_r2(&yv, &[baseline])?;
    let full = ols_r2(&yv, &[baseline, predictor])?;
    Ok((full - reduced).max(0.0))
}

// ---------------------------------------------------------------------------
// Descriptives

/// Linear-interpolation percentile: position `h = (n - 1) * q / 100` on the
/// sorted values.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(StatsError::InvalidQuantile(q));
    }
    check_finite(values)?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// `100 * (treat - base) / base`; negative means the treatment lowered the value.
pub fn relative_change(base: f64, treat: f64) -> Result<f64> {
    if !base.is_finite() || base <= 0.0 {
        return Err(StatsError::ZeroBase(base));
    }
    if !treat.is_finite() {
        return Err(StatsError::NonFinite);
    }
    Ok(100.0 * (treat - base) / base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn paired_examples() {
        let s = paired_summary(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((s.delta_mean, s.cohen_d, s.degraded_pct), (0.0, Some(0.0), 0.0));
        assert_eq!(s.p_raw, 1.0);

        let s = paired_summary(&[0.1, 0.2], &[0.2, 0.2]).unwrap();
        assert_eq!(s.degraded_pct, 50.0);

        // constant nonzero shift: d undefined
        let s = paired_summary(&[0.0, 0.5, 0.25], &[0.5, 1.0, 0.75]).unwrap();
        assert_eq!(s.cohen_d, None);
        assert_eq!(s.effect_label, None);
        assert_abs_diff_eq!(s.delta_mean, 0.5);

        // diffs [1, 2, 3]: mean 2, sd 1
        let s = paired_summary(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(s.cohen_d.unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(s.effect_label, Some(EffectLabel::Large));

        assert_eq!(paired_summary(&[0.1], &[]), Err(StatsError::LengthMismatch(1, 0)));
    }

    #[test]
    fn effect_labels() {
        assert_eq!(EffectLabel::from_d(0.035), EffectLabel::Negligible);
        assert_eq!(EffectLabel::from_d(0.223), EffectLabel::Small);
        assert_eq!(EffectLabel::from_d(0.561), EffectLabel::Medium);
        assert_eq!(EffectLabel::from_d(-0.9), EffectLabel::Large);
        assert_eq!(EffectLabel::from_d(0.2), EffectLabel::Small);
    }

    #[test]
    fn wilcoxon_examples() {
        assert_abs_diff_eq!(wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap(), 0.25);
        assert_eq!(wilcoxon_signed_rank(&[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(wilcoxon_signed_rank(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(wilcoxon_signed_rank(&[]).unwrap(), 1.0);
        // zeros are dropped before ranking
        assert_abs_diff_eq!(wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 3.0]).unwrap(), 0.25);
    }

    #[test]
    fn wilcoxon_normal_branch_is_close_to_exact() {
        // 26 positive-leaning diffs straddle the switch between paths
        let d: Vec<f64> = (1..=26).map(|i| if i % 4 == 0 { -(i as f64) } else { i as f64 }).collect();
        let approx = wilcoxon_signed_rank(&d).unwrap();
        let exact = wilcoxon_signed_rank(&d[..25]).unwrap();
        assert!(approx > 0.0 && approx < 1.0);
        assert!((approx - exact).abs() < 0.05, "{approx} vs {exact}");
    }

    #[test]
    fn bh_examples() {
        let adj = bh_fdr(&[0.01, 0.02, 0.03, 0.04]).unwrap();
        for a in adj {
            assert_abs_diff_eq!(a, 0.04, epsilon = 1e-15);
        }
        assert_eq!(bh_fdr(&[0.3]).unwrap(), vec![0.3]);
        assert_eq!(bh_fdr(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        let adj = bh_fdr(&[0.04, 0.001]).unwrap();
        assert_abs_diff_eq!(adj[0], 0.04);
        assert_abs_diff_eq!(adj[1], 0.002);
        assert_eq!(bh_fdr(&[1.5]), Err(StatsError::InvalidP(1.5)));
        assert!(bh_fdr(&[]).unwrap().is_empty());
    }

    #[test]
    fn spearman_examples() {
        let up = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_abs_diff_eq!(up.spearman_rho, 1.0);
        assert_eq!(up.spearman_p, 0.0);
        let down = spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(down.spearman_rho, -1.0);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r.spearman_rho, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(r.r_squared, r.pearson_r * r.pearson_r);
        // t = 0.8 * sqrt(2 / 0.36) = 1.8856; two-sided p with 2 df
        assert_abs_diff_eq!(r.spearman_p, 0.2, epsilon = 1e-3);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::ConstantInput));
        assert!(matches!(spearman(&[1.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch(..))));
    }

    #[test]
    fn incremental_r2_detects_added_signal() {
        let base: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let extra: Vec<f64> = (0..40).map(|i| (i as f64 * 1.3).cos()).collect();
        let y: Vec<f64> = base.iter().zip(&extra).map(|(b, e)| 2.0 * b + 0.5 * e).collect();
        let gain = incremental_r2(&y, &base, &extra).unwrap();
        assert!(gain > 0.01);
        let y_only_base: Vec<f64> = base.iter().map(|b| 3.0 * b + 1.0).collect();
        assert!(incremental_r2(&y_only_base, &base, &extra).unwrap() < 1e-9);
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_abs_diff_eq!(percentile(&v, 90.0).unwrap(), 9.1, epsilon = 1e-12);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 10.0);
        assert_eq!(percentile(&[4.2], 37.0).unwrap(), 4.2);
        assert_eq!(percentile(&[], 50.0), Err(StatsError::EmptyInput));
        assert_eq!(percentile(&v, 101.0), Err(StatsError::InvalidQuantile(101.0)));
    }

    #[test]
    fn relative_change_examples() {
        assert_eq!(relative_change(0.2, 0.2).unwrap(), 0.0);
        assert_abs_diff_eq!(relative_change(0.152, 0.141).unwrap(), -7.2368, epsilon = 1e-4);
        assert_eq!(relative_change(0.0, 0.1), Err(StatsError::ZeroBase(0.0)));
    }

    #[test]
    fn speaker_level() {
        let speakers = ["b", "a", "b", "a", "c", "c"];
        let base = [0.2, 0.4, 0.2, 0.4, 0.1, 0.3];
        let same = speaker_level_test(&base, &base, &speakers, 3).unwrap();
        assert_eq!(same.p, 1.0);
        assert!(same.ci95.0 <= 0.0 && same.ci95.1 >= 0.0);
        assert_eq!(same.n_speakers, 3);
        assert_eq!(same.speaker_means["c"], (0.2, 0.2));

        let treat: Vec<f64> = base.iter().map(|b| b + 0.05).collect();
        let a = speaker_level_test(&base, &treat, &speakers, 9).unwrap();
        let b = speaker_level_test(&base, &treat, &speakers, 9).unwrap();
        assert_eq!(a.ci95, b.ci95);
        assert!(matches!(
            speaker_level_test(&[0.1], &[0.2], &["x"], 0),
            Err(StatsError::FewerThanTwoSpeakers(1))
        ));
    }
}
