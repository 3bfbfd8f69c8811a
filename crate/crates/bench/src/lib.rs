//! Seeded synthetic inputs shared by the benchmarks.

use dyseval_core::{Category, Utterance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: &[&str] = &[
    "the", "a", "set", "timer", "for", "ten", "minutes", "call", "my", "sister", "turn", "off",
    "lights", "water", "please", "i", "want", "to", "go", "home", "(um)", "(uh)", "(w-)",
];

pub fn sentence(rng: &mut impl Rng, words: usize) -> String {
    (0..words)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Corrupts roughly `rate` of the words by substitution, deletion or insertion.
pub fn corrupt(rng: &mut impl Rng, text: &str, rate: f64) -> String {
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        if rng.random_bool(rate) {
            match rng.random_range(0..3) {
                0 => out.push(VOCAB[rng.random_range(0..VOCAB.len())]),
                1 => {}
                _ => {
                    out.push(w);
                    out.push(VOCAB[rng.random_range(0..VOCAB.len())]);
                }
            }
        } else {
            out.push(w);
        }
    }
    out.join(" ")
}

/// `n` utterances of `words` words each with a hypothesis at ~10% word error.
pub fn scored_pairs(n: usize, words: usize, seed: u64) -> Vec<(Utterance, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let verbatim = sentence(&mut rng, words);
            let clean = verbatim
                .split_whitespace()
                .filter(|w| !w.starts_with('('))
                .collect::<Vec<_>>()
                .join(" ");
            let hyp = corrupt(&mut rng, &clean, 0.1);
            let u = Utterance {
                utterance_id: format!("u{i:05}"),
                speaker_id: format!("s{:03}", i % 50),
                category: Category::NovelSentence,
                verbatim_ref: verbatim,
                clean_ref: clean,
                audio_ref: None,
            };
            (u, hyp)
        })
        .collect()
}

/// Differences with a small positive shift, as seen between prompt conditions.
pub fn diffs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.2..0.25)).collect()
}
