//! Trainable text router: hashed features into a linear softmax classifier.
//!
//! The router maps a query text to a probability distribution over its
//! labels (model names for direct routing, subject names for two-stage
//! routing) and picks the most probable label.

mod features;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

pub use features::{featurize, tokenize, FeaturizerSpec, SparseVector, DEFAULT_DIMENSION, DEFAULT_HASH_SEED};
pub use train::{gradient, loss, train, train_traced, TrainConfig, TrainTrace};

use crate::corpus::Leaderboard;
use crate::error::{Error, Result};

pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub final_loss: f64,
}

/// Trained router parameters. `weights` is a `labels.len() × dimension`
/// matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterParams {
    pub spec: FeaturizerSpec,
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub meta: TrainingMeta,
}

impl RouterParams {
    pub fn zeros(spec: FeaturizerSpec, labels: Vec<String>) -> Self {
        let c = labels.len();
        RouterParams {
            spec,
            weights: vec![0.0; c * spec.dimension],
            bias: vec![0.0; c],
            labels,
            meta: TrainingMeta::default(),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.labels.len();
        if c == 0 {
            return Err(Error::InvalidParams("no labels".into()));
        }
        if self.spec.dimension < 2 {
            return Err(Error::InvalidParams(format!(
                "feature dimension {} is below 2",
                self.spec.dimension
            )));
        }
        if self.weights.len() != c * self.spec.dimension {
            return Err(Error::InvalidParams(format!(
                "dimension mismatch: {} weights for {} labels × {} features",
                self.weights.len(),
                c,
                self.spec.dimension
            )));
        }
        if self.bias.len() != c {
            return Err(Error::InvalidParams(format!(
                "dimension mismatch: {} biases for {} labels",
                self.bias.len(),
                c
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::InvalidParams("non-finite entry".into()));
        }
        Ok(())
    }

    pub fn logits_for(&self, x: &SparseVector) -> Vec<f64> {
        let d = self.spec.dimension;
        self.bias
            .iter()
            .enumerate()
            .map(|(c, b)| {
                let row = &self.weights[c * d..(c + 1) * d];
                x.entries.iter().map(|&(j, v)| row[j] * v).sum::<f64>() + b
            })
            .collect()
    }

    pub fn logits(&self, text: &str) -> Vec<f64> {
        self.logits_for(&featurize(text, &self.spec))
    }
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; exact ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict_distribution(params: &RouterParams, text: &str) -> Vec<f64> {
    softmax(&params.logits(text))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub index: usize,
    pub label: String,
    pub distribution: Vec<f64>,
}

pub fn route(params: &RouterParams, text: &str) -> Route {
    let distribution = predict_distribution(params, text);
    let index = argmax(&distribution);
    Route {
        index,
        label: params.labels[index].clone(),
        distribution,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRoute {
    pub model: String,
    pub subject: String,
    /// Distribution over the subject router's labels.
    pub distribution: Vec<f64>,
}

/// Predict the subject, then take that subject's best model on `lb`.
pub fn route_via_leaderboard(
    subject_params: &RouterParams,
    lb: &Leaderboard,
    text: &str,
) -> Result<LeaderboardRoute> {
    let Route {
        label: subject,
        distribution,
        ..
    } = route(subject_params, text);
    let model = lb
        .best_model(&subject)
        .ok_or_else(|| Error::UnknownSubject(subject.clone()))?
        .to_string();
    Ok(LeaderboardRoute {
        model,
        subject,
        distribution,
    })
}

/// A leaderboard that can be replaced while readers hold the previous
/// version; each reader works against one consistent snapshot.
#[derive(Debug)]
pub struct SharedLeaderboard {
    current: RwLock<Arc<Leaderboard>>,
}

impl SharedLeaderboard {
    pub fn new(lb: Leaderboard) -> Self {
        SharedLeaderboard {
            current: RwLock::new(Arc::new(lb)),
        }
    }

    pub fn snapshot(&self) -> Arc<Leaderboard> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, lb: Leaderboard) -> Arc<Leaderboard> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, Arc::new(lb))
    }
}

#[derive(Serialize)]
struct ParamsOut<'a> {
    version: u32,
    spec: &'a FeaturizerSpec,
    labels: &'a [String],
    weights: &'a [f64],
    bias: &'a [f64],
    meta: &'a TrainingMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsIn {
    version: u32,
    spec: FeaturizerSpec,
    labels: Vec<String>,
    weights: Vec<f64>,
    bias: Vec<f64>,
    meta: TrainingMeta,
}

impl RouterParams {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut buf = serde_json::to_vec(&ParamsOut {
            version: PARAMS_VERSION,
            spec: &self.spec,
            labels: &self.labels,
            weights: &self.weights,
            bias: &self.bias,
            meta: &self.meta,
        })?;
        buf.push(b'\n');
        Ok(buf)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: ParamsIn =
            serde_json::from_slice(bytes).map_err(|e| Error::InvalidParams(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: ParamsIn) -> Result<Self> {
        if raw.version != PARAMS_VERSION {
            return Err(Error::InvalidParams(format!(
                "version mismatch: file has {}, expected {}",
                raw.version, PARAMS_VERSION
            )));
        }
        let params = RouterParams {
            spec: raw.spec,
            labels: raw.labels,
            weights: raw.weights,
            bias: raw.bias,
            meta: raw.meta,
        };
        params.validate()?;
        Ok(params)
    }
}

pub fn save_params(params: &RouterParams, path: impl AsRef<Path>) -> Result<()> {
    params.validate()?;
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    out.write_all(&params.to_json()?)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<RouterParams> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let raw: ParamsIn = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    RouterParams::from_raw(raw)
}
