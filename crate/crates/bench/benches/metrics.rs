use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dyseval_bench::{diffs, scored_pairs};
use dyseval_core::stats::bootstrap_mean_ci;
use dyseval_core::{
    align_words, normalize, phonetic_similarity, score_sample, wilcoxon_signed_rank,
    NormalizationProfile, Role,
};

fn alignment(c: &mut Criterion) {
    let norm = NormalizationProfile::default();
    let mut g = c.benchmark_group("align_words");
    for words in [10, 50, 200] {
        let pairs = scored_pairs(1, words, 1);
        let (u, hyp) = &pairs[0];
        let h = normalize(hyp, Role::Hypothesis, &norm);
        let r = normalize(&u.clean_ref, Role::Reference, &norm);
        g.bench_with_input(BenchmarkId::from_parameter(words), &(h, r), |b, (h, r)| {
            b.iter(|| align_words(black_box(h), black_box(r)))
        });
    }
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let norm = NormalizationProfile::default();
    let pairs = scored_pairs(1_000, 15, 2);
    c.bench_function("score_sample x1000", |b| {
        b.iter(|| {
            for (u, hyp) in &pairs {
                black_box(score_sample(hyp, u, &norm).unwrap());
            }
        })
    });
    c.bench_function("normalize x1000", |b| {
        b.iter(|| {
            for (u, _) in &pairs {
                black_box(normalize(&u.verbatim_ref, Role::Reference, &norm));
            }
        })
    });
    let seqs: Vec<_> = pairs
        .iter()
        .map(|(u, h)| {
            (
                normalize(h, Role::Hypothesis, &norm),
                normalize(&u.clean_ref, Role::Reference, &norm),
            )
        })
        .collect();
    c.bench_function("phonetic_similarity x1000", |b| {
        b.iter(|| {
            for (h, r) in &seqs {
                black_box(phonetic_similarity(h, r));
            }
        })
    });
}

fn statistics(c: &mut Criterion) {
    let mut g = c.benchmark_group("wilcoxon");
    for n in [20, 25, 437, 5_000] {
        let d = diffs(n, 3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| {
            b.iter(|| wilcoxon_signed_rank(black_box(d)).unwrap())
        });
    }
    g.finish();
    let d = diffs(437, 4);
    c.bench_function("bootstrap 10k x 437", |b| {
        b.iter(|| bootstrap_mean_ci(black_box(&d), 10_000, 7).unwrap())
    });
}

criterion_group!(benches, alignment, scoring, statistics);
criterion_main!(benches);
