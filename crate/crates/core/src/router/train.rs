//! Mini-batch gradient descent on softmax cross-entropy.
//!
//! Objective over a set of examples `(x_i, y_i)`:
//!
//! ```text
//! J(W, b) = (1/n) Σ_i [ logsumexp(W x_i + b) - (W x_i + b)_{y_i} ] + (λ/2) ‖W‖²
//! ```
//!
//! The bias is not penalized.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, FeaturizerSpec, SparseVector};
use super::{log_sum_exp, softmax, RouterParams, TrainingMeta};
use crate::error::{Error, Result};
use crate::labeler::RouterDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 42,
            l2_penalty: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(Error::InvalidConfig("l2_penalty must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Loss after every optimizer step, evaluated on the full training set.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub initial_loss: f64,
    pub step_losses: Vec<f64>,
}

/// Accumulates `∂(mean CE)/∂logit` for each example into `sink(class, example, g)`.
/// Returns the summed (not averaged) cross-entropy.
fn data_gradient(
    weights: &[f64],
    weight_scale: f64,
    bias: &[f64],
    dimension: usize,
    batch: &[(&SparseVector, usize)],
    mut sink: impl FnMut(usize, usize, f64),
) -> f64 {
    let n = batch.len() as f64;
    let classes = bias.len();
    let mut logits = vec![0.0; classes];
    let mut ce = 0.0;
    for (e, (x, y)) in batch.iter().enumerate() {
        for (c, z) in logits.iter_mut().enumerate() {
            let row = &weights[c * dimension..(c + 1) * dimension];
            *z = weight_scale * x.entries.iter().map(|&(j, v)| row[j] * v).sum::<f64>() + bias[c];
        }
        ce += log_sum_exp(&logits) - logits[*y];
        let p = softmax(&logits);
        for (c, pc) in p.into_iter().enumerate() {
            let indicator = if c == *y { 1.0 } else { 0.0 };
            sink(c, e, (pc - indicator) / n);
        }
    }
    ce
}

/// Training objective on the given examples.
pub fn loss(params: &RouterParams, batch: &[(&SparseVector, usize)], l2_penalty: f64) -> f64 {
    let d = params.spec.dimension;
    let ce = data_gradient(&params.weights, 1.0, &params.bias, d, batch, |_, _, _| {});
    let sq: f64 = params.weights.iter().map(|w| w * w).sum();
    ce / batch.len() as f64 + 0.5 * l2_penalty * sq
}

/// Objective value and its dense gradient `(∂J/∂W row-major, ∂J/∂b)`.
pub fn gradient(
    params: &RouterParams,
    batch: &[(&SparseVector, usize)],
    l2_penalty: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let d = params.spec.dimension;
    let mut gw: Vec<f64> = params.weights.iter().map(|w| l2_penalty * w).collect();
    let mut gb = vec![0.0; params.bias.len()];
    let ce = data_gradient(&params.weights, 1.0, &params.bias, d, batch, |c, e, g| {
        gb[c] += g;
        for &(j, v) in &batch[e].0.entries {
            gw[c * d + j] += g * v;
        }
    });
    let sq: f64 = params.weights.iter().map(|w| w * w).sum();
    (ce / batch.len() as f64 + 0.5 * l2_penalty * sq, gw, gb)
}

pub fn train(dataset: &RouterDataset, spec: FeaturizerSpec, cfg: &TrainConfig) -> Result<RouterParams> {
    train_inner(dataset, spec, cfg, false).map(|(p, _)| p)
}

/// Like [`train`], also recording the full-set loss after every step.
pub fn train_traced(
    dataset: &RouterDataset,
    spec: FeaturizerSpec,
    cfg: &TrainConfig,
) -> Result<(RouterParams, TrainTrace)> {
    train_inner(dataset, spec, cfg, true)
}

fn train_inner(
    dataset: &RouterDataset,
    spec: FeaturizerSpec,
    cfg: &TrainConfig,
    traced: bool,
) -> Result<(RouterParams, TrainTrace)> {
    cfg.validate()?;
    if spec.dimension < 2 {
        return Err(Error::InvalidConfig("feature dimension must be at least 2".into()));
    }
    if dataset.examples.is_empty() {
        return Err(Error::InvalidDataset("no examples".into()));
    }
    let classes = dataset.model_names.len();
    if let Some(ex) = dataset.examples.iter().find(|e| e.label >= classes) {
        return Err(Error::InvalidDataset(format!(
            "query `{}`: label {} out of range for {} classes",
            ex.query_id, ex.label, classes
        )));
    }

    let features: Vec<SparseVector> = dataset.examples.iter().map(|e| featurize(&e.text, &spec)).collect();
    let all: Vec<(&SparseVector, usize)> = features.iter().zip(dataset.labels()).collect();

    let mut params = RouterParams::zeros(spec, dataset.model_names.clone());
    let d = spec.dimension;
    let mut trace = TrainTrace {
        initial_loss: loss(&params, &all, cfg.l2_penalty),
        step_losses: Vec::new(),
    };

    // Weights are stored as `scale * stored` so the L2 shrinkage of every
    // step costs O(1) instead of O(C·D).
    let mut stored = std::mem::take(&mut params.weights);
    let mut scale = 1.0;
    let shrink = 1.0 - cfg.learning_rate * cfg.l2_penalty;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..all.len()).collect();
    let mut final_loss = trace.initial_loss;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut grad_logits: Vec<(usize, usize, f64)> = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| all[i]));
            grad_logits.clear();
            data_gradient(&stored, scale, &params.bias, d, &batch, |c, e, g| {
                grad_logits.push((c, e, g));
            });

            if shrink != 0.0 {
                scale *= shrink;
            } else {
                stored.iter_mut().for_each(|w| *w = 0.0);
                scale = 1.0;
            }
            for &(c, e, g) in &grad_logits {
                params.bias[c] -= cfg.learning_rate * g;
                let step = cfg.learning_rate * g / scale;
                for &(j, v) in &batch[e].0.entries {
                    stored[c * d + j] -= step * v;
                }
            }
            if scale.abs() < 1e-100 {
                stored.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            if traced {
                params.weights = stored.iter().map(|w| w * scale).collect();
                trace.step_losses.push(loss(&params, &all, cfg.l2_penalty));
                params.weights.clear();
            }
        }

        params.weights = stored.iter().map(|w| w * scale).collect();
        final_loss = loss(&params, &all, cfg.l2_penalty);
        params.weights.clear();
        if !final_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }

    params.weights = stored.into_iter().map(|w| w * scale).collect();
    if params.weights.iter().chain(&params.bias).any(|w| !w.is_finite()) {
        return Err(Error::Diverged {
            epoch: cfg.epochs.saturating_sub(1),
        });
    }
    params.meta = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        l2_penalty: cfg.l2_penalty,
        final_loss,
    };
    Ok((params, trace))
}
