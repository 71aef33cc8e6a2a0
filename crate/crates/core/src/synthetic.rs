//! Seeded synthetic correctness matrices used by tests, benches and demos.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorrectnessMatrix, QueryRecord};

const CLASS_WORDS: [&str; 8] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "theta", "kappa",
];

fn letters(n: usize) -> Vec<String> {
    (0..n).map(|i| char::from(b'A' + i as u8).to_string()).collect()
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Two models, three queries: A=(1,1,0), B=(0,1,1).
pub fn tie_fixture() -> CorrectnessMatrix {
    CorrectnessMatrix::new(
        "tie-fixture",
        names(&["A", "B"]),
        vec![
            QueryRecord::new("q1", "s", "first question", "x", vec![1.0, 0.0]),
            QueryRecord::new("q2", "s", "second question", "y", vec![1.0, 1.0]),
            QueryRecord::new("q3", "s", "third question", "z", vec![0.0, 1.0]),
        ],
    )
    .expect("valid fixture")
}

/// Two models, two subjects: s1={q1,q2} won by A, s2={q3} won by B.
pub fn subject_fixture() -> CorrectnessMatrix {
    CorrectnessMatrix::new(
        "subject-fixture",
        names(&["A", "B"]),
        vec![
            QueryRecord::new("q1", "s1", "first question", "x", vec![1.0, 0.0]),
            QueryRecord::new("q2", "s1", "second question", "y", vec![1.0, 0.0]),
            QueryRecord::new("q3", "s2", "third question", "z", vec![0.0, 1.0]),
        ],
    )
    .expect("valid fixture")
}

/// Class `k` (at most 8) owns the vocabulary `{word_k}0 … {word_k}39`.
/// Each query is 6–10 words from its class vocabulary; model `k` (named
/// `A`, `B`, …) scores 1 on class-`k` queries and every other model 0.
pub fn keyword_corpus(classes: usize, per_class: usize, seed: u64) -> CorrectnessMatrix {
    assert!((1..=CLASS_WORDS.len()).contains(&classes));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(classes * per_class);
    for i in 0..per_class {
        for (k, word) in CLASS_WORDS.iter().enumerate().take(classes) {
            let len = rng.random_range(6..=10);
            let text = (0..len)
                .map(|_| format!("{word}{}", rng.random_range(0..40)))
                .collect::<Vec<_>>()
                .join(" ");
            let mut scores = vec![0.0; classes];
            scores[k] = 1.0;
            records.push(QueryRecord::new(format!("{word}-{i}"), *word, text, "", scores));
        }
    }
    CorrectnessMatrix::new("keywords", letters(classes), records).expect("valid fixture")
}

/// How scores of [`random_matrix`] are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grading {
    Binary,
    /// Multiples of `1/steps`; exact in binary floating point when `steps`
    /// is a power of two.
    Grid(u32),
    Continuous,
}

pub fn random_matrix(
    rng: &mut impl Rng,
    models: usize,
    queries: usize,
    subjects: usize,
    grading: Grading,
) -> CorrectnessMatrix {
    let records = (0..queries)
        .map(|i| {
            let scores = (0..models)
                .map(|_| match grading {
                    Grading::Binary => f64::from(u8::from(rng.random_bool(0.5))),
                    Grading::Grid(steps) => f64::from(rng.random_range(0..=steps)) / f64::from(steps),
                    Grading::Continuous => rng.random_range(0.0..=1.0),
                })
                .collect();
            let subject = format!("s{}", rng.random_range(0..subjects));
            QueryRecord::new(format!("r{i}"), subject, format!("query {i}"), "", scores)
        })
        .collect();
    CorrectnessMatrix::new("random", letters(models), records).expect("valid random matrix")
}

const DRIFT_SUBJECTS: [&str; 4] = ["algebra", "history", "chemistry", "law"];

/// Train/test pair with a distribution shift between them.
///
/// Four models and four subjects; model `b` is the best on subject `b`,
/// winning each query with probability 0.55 (otherwise one of the other
/// three wins). Query text is four subject words plus two "format" words.
///
/// In the train matrix the format words belong to the query's winning
/// model, so per-query winners are predictable from text. In the test
/// matrix the format words are drawn from a random model, and the
/// subject vocabulary is shifted by half its size. The subject → winner
/// structure is the same in both.
pub fn drift_pair(queries: usize, seed: u64) -> (CorrectnessMatrix, CorrectnessMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = drift_matrix(&mut rng, "drift-train", queries, 0, true);
    let test = drift_matrix(&mut rng, "drift-test", queries, 10, false);
    (train, test)
}

fn drift_matrix(
    rng: &mut ChaCha8Rng,
    id: &str,
    queries: usize,
    vocab_offset: u32,
    format_follows_winner: bool,
) -> CorrectnessMatrix {
    let models = DRIFT_SUBJECTS.len();
    let records = (0..queries)
        .map(|i| {
            let b = rng.random_range(0..models);
            let winner = if rng.random_bool(0.55) {
                b
            } else {
                let others: Vec<usize> = (0..models).filter(|&m| m != b).collect();
                *others.choose(rng).expect("non-empty")
            };
            let format_model = if format_follows_winner {
                winner
            } else {
                rng.random_range(0..models)
            };
            let subject = DRIFT_SUBJECTS[b];
            let mut words: Vec<String> = (0..4)
                .map(|_| format!("{subject}w{}", vocab_offset + rng.random_range(0..20)))
                .collect();
            words.extend((0..2).map(|_| format!("fmt{format_model}x{}", rng.random_range(0..6))));
            let mut scores = vec![0.0; models];
            scores[winner] = 1.0;
            QueryRecord::new(format!("{id}-{i}"), subject, words.join(" "), "", scores)
        })
        .collect();
    CorrectnessMatrix::new(id, letters(models), records).expect("valid drift fixture")
}
