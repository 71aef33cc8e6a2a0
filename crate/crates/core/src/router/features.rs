//! Hashed bag-of-words features.

use serde::{Deserialize, Serialize};

pub const DEFAULT_DIMENSION: usize = 65536;
pub const DEFAULT_HASH_SEED: u64 = 0;

/// Feature hashing configuration. Travels with trained parameters so a
/// loaded router featurizes text exactly as it did during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerSpec {
    #[serde(rename = "dim")]
    pub dimension: usize,
    pub seed: u64,
}

impl Default for FeaturizerSpec {
    fn default() -> Self {
        FeaturizerSpec {
            dimension: DEFAULT_DIMENSION,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl FeaturizerSpec {
    pub fn new(dimension: usize, seed: u64) -> Self {
        FeaturizerSpec { dimension, seed }
    }

    /// Bucket a single (already lowercased) token falls into.
    pub fn bucket(&self, token: &str) -> usize {
        (hash_token(token, self.seed) % self.dimension as u64) as usize
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub dimension: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        for &(i, v) in &self.entries {
            dense[i] = v;
        }
        dense
    }
}

/// Lowercase, split on anything that is not alphanumeric, drop empties.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn featurize(text: &str, spec: &FeaturizerSpec) -> SparseVector {
    let mut buckets: Vec<usize> = tokenize(text).map(|t| spec.bucket(&t)).collect();
    buckets.sort_unstable();

    let mut entries: Vec<(usize, f64)> = Vec::new();
    for b in buckets {
        match entries.last_mut() {
            Some((last, count)) if *last == b => *count += 1.0,
            _ => entries.push((b, 1.0)),
        }
    }
    let mut v = SparseVector {
        dimension: spec.dimension,
        entries,
    };
    let norm = v.norm();
    if norm > 0.0 {
        for (_, x) in &mut v.entries {
            *x /= norm;
        }
    }
    v
}

// FNV-1a over the token bytes, seeded, with a splitmix64 finalizer so that
// low bits are well mixed before the modulo.
fn hash_token(token: &str, seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
