use coe_core::corpus::{compute_leaderboard, CorrectnessMatrix};
use coe_core::labeler::{build_query_labels, build_subject_labels, select_model_set, Level};
use coe_core::synthetic::{self, Grading};
use coe_core::{read_dataset, write_dataset};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn arb_matrix() -> impl Strategy<Value = CorrectnessMatrix> {
    (1usize..6, 1usize..80, 1usize..5, any::<u64>(), 0u8..3).prop_map(|(l, n, b, seed, g)| {
        let grading = [Grading::Binary, Grading::Grid(4), Grading::Continuous][g as usize];
        synthetic::random_matrix(&mut ChaCha8Rng::seed_from_u64(seed), l, n, b, grading)
    })
}

/// Exhaustive reading of the query-level tie rule, written independently
/// of the labeler: collect the tied maxima, then keep those with the best
/// overall mean, then take the first.
fn query_label_oracle(m: &CorrectnessMatrix, i: usize) -> usize {
    let lb = compute_leaderboard(m);
    let scores = &m.records()[i].scores;
    let max = scores.iter().cloned().fold(f64::MIN, f64::max);
    let tied: Vec<usize> = (0..scores.len()).filter(|&l| scores[l] == max).collect();
    let best_overall = tied
        .iter()
        .map(|&l| lb.overall[&m.model_names()[l]])
        .fold(f64::MIN, f64::max);
    *tied
        .iter()
        .find(|&&l| lb.overall[&m.model_names()[l]] == best_overall)
        .unwrap()
}

proptest! {
    #[test]
    fn query_label_attains_row_max(m in arb_matrix()) {
        let d = build_query_labels(&m);
        prop_assert_eq!(d.level, Level::Query);
        for (i, (ex, r)) in d.examples.iter().zip(m.records()).enumerate() {
            let max = r.scores.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(r.scores[ex.label], max);
            prop_assert_eq!(ex.label, query_label_oracle(&m, i));
            prop_assert_eq!(&ex.label_name, &m.model_names()[ex.label]);
        }
    }

    #[test]
    fn subject_labels_are_shared(m in arb_matrix()) {
        let d = build_subject_labels(&m);
        let mut by_subject: HashMap<&str, usize> = HashMap::new();
        for ex in &d.examples {
            let first = *by_subject.entry(ex.subject.as_str()).or_insert(ex.label);
            prop_assert_eq!(first, ex.label);
        }
        let lb = compute_leaderboard(&m);
        for (subject, label) in by_subject {
            let row = &lb.table[subject];
            let best = row.values().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(row[&m.model_names()[label]], best);
        }
    }

    #[test]
    fn replayed_label_chain(m in arb_matrix()) {
        // mean_i max_l p ≥ Σ_b w_b max_l table[b][l] ≥ max_l overall[l]
        let n = m.len() as f64;
        let query = m.records().iter().map(|r| r.scores.iter().cloned().fold(f64::MIN, f64::max)).sum::<f64>() / n;
        let lb = compute_leaderboard(&m);
        let subject: f64 = m.subjects().iter().zip(m.subject_groups()).map(|(s, g)| {
            g.len() as f64 / n * lb.table[s].values().cloned().fold(f64::MIN, f64::max)
        }).sum();
        let single = lb.overall.values().cloned().fold(f64::MIN, f64::max);
        prop_assert!(query >= subject - 1e-12);
        prop_assert!(subject >= single - 1e-12);
    }

    #[test]
    fn dataset_files_are_deterministic(m in arb_matrix()) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        build_query_labels(&m).write_to(&mut a).unwrap();
        build_query_labels(&m.clone()).write_to(&mut b).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn model_set_examples() {
    let d = build_subject_labels(&synthetic::subject_fixture());
    assert_eq!(select_model_set(&d), vec!["A".to_string(), "B".to_string()]);
    let d = build_query_labels(&synthetic::tie_fixture());
    assert_eq!(select_model_set(&d), vec!["A".to_string(), "B".to_string()]);
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let d = build_query_labels(&synthetic::tie_fixture());
    write_dataset(&d, &path).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), d);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        r#"{"type":"header","level":"query","models":["A","B"],"dataset":"tie-fixture"}"#
    );
}
