//! Shared setup for the criterion benches.

use coe_core::router::{FeaturizerSpec, TrainConfig};
use coe_core::{build_query_labels, synthetic, train, CorrectnessMatrix, RouterDataset, RouterParams};

/// Keyword corpus with `per_class` queries for each of four classes.
pub fn corpus(per_class: usize) -> CorrectnessMatrix {
    synthetic::keyword_corpus(4, per_class, 1)
}

pub fn dataset(per_class: usize) -> RouterDataset {
    build_query_labels(&corpus(per_class))
}

pub fn trained(per_class: usize) -> RouterParams {
    train(&dataset(per_class), FeaturizerSpec::default(), &TrainConfig::default()).expect("trains")
}
