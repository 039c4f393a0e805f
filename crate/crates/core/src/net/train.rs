//! Per-sentence training loop with Adam, gradient clipping and
//! learning-rate halving on validation plateaus.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use super::{loss, loss_and_grad, SeqInput, SequenceModel};
use crate::corpus::rng_from_seed;
use crate::error::{bail, Result};

/// One training sentence: input columns and gold class per output.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: SeqInput,
    pub targets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Halve the learning rate after this many epochs without validation improvement.
    pub plateau_patience: Option<usize>,
    /// Stop once the mean training loss of an epoch drops below this.
    pub target_loss: Option<f64>,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.01,
            clip_norm: Some(5.0),
            plateau_patience: Some(3),
            target_loss: None,
            shuffle_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sentence training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub final_lr: f64,
}

pub fn mean_loss(model: &SequenceModel, data: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        total += loss(&model.config, &model.params, &ex.input, &ex.targets)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Trains `model` in place with batch size 1.
pub fn train(
    model: &mut SequenceModel,
    data: &[Example],
    validation: Option<&[Example]>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        bail!(Training, "no training examples");
    }
    let mut adam = AdamState::new(&model.params, cfg.lr);
    let mut grads = model.params.zeros_like();
    let mut rng = rng_from_seed(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    let mut best_val = f64::INFINITY;
    let mut stale = 0;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = &data[i];
            grads.fill_zero();
            total += loss_and_grad(&model.config, &model.params, &ex.input, &ex.targets, &mut grads)?;
            if let Some(clip) = cfg.clip_norm {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            adam.update(&mut model.params, &grads);
        }
        if !model.params.all_finite() {
            bail!(Training, "parameters diverged to non-finite values");
        }
        let epoch_loss = total / data.len() as f64;
        report.epoch_losses.push(epoch_loss);

        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            let v = mean_loss(model, val)?;
            report.validation_losses.push(v);
            if v < best_val - 1e-9 {
                best_val = v;
                stale = 0;
            } else {
                stale += 1;
                if cfg.plateau_patience.is_some_and(|p| stale >= p) {
                    adam.lr *= 0.5;
                    stale = 0;
                }
            }
        }
        if cfg.target_loss.is_some_and(|t| epoch_loss < t) {
            break;
        }
    }
    report.final_lr = adam.lr;
    Ok(report)
}

/// Architecture plus training schedule for one classifier or tagger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: super::Architecture,
    pub train: TrainConfig,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(architecture: super::Architecture, epochs: usize, seed: u64) -> ModelSpec {
        ModelSpec { architecture, train: TrainConfig { epochs, shuffle_seed: seed, ..TrainConfig::default() }, seed }
    }
}
