//! Training machinery: Adam, minibatch scheduling, early stopping and
//! hold-out selection of tuning parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{mean_check_loss, QuantileLevel};
use crate::model::{fit, residuals, Dataset, Mode};
use crate::rng::Rng;

/// Tuning parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of weight layers `L`; 1 is a pure affine map.
    pub depth: usize,
    /// Units per hidden layer.
    pub width: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub early_stop_patience: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 16,
            epochs: 500,
            minibatch: 64,
            early_stop_patience: 50,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what}")));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.depth > 1 && self.width == 0 {
            return bad("width must be positive");
        }
        if self.minibatch == 0 {
            return bad("minibatch must be positive");
        }
        if self.early_stop_patience == 0 {
            return bad("early-stop patience must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be a positive number");
        }
        Ok(())
    }

    /// The selected configuration for a simulation design and sample size,
    /// together with the two candidate learning rates listed for it.
    ///
    /// Designs 1/4 are linear, 2/5 additive and 3/6 deep; sample sizes
    /// below 1250 use the n = 500 column, the rest the n = 2000 column.
    pub fn for_design(design: u8, n: usize) -> Result<(TrainConfig, [f64; 2])> {
        let large = n >= 1250;
        let (depth, width, epochs, minibatch, patience, lrs) = match (design, large) {
            (1 | 4, false) => (2, 16, 500, 64, 50, [0.01, 0.02]),
            (1 | 4, true) => (3, 32, 500, 64, 50, [0.01, 0.02]),
            (2 | 5, false) => (3, 10, 500, 64, 50, [0.009, 0.01]),
            (2 | 5, true) => (3, 20, 500, 64, 50, [0.009, 0.02]),
            (3 | 6, false) => (2, 20, 600, 128, 100, [0.01, 0.02]),
            (3 | 6, true) => (3, 32, 600, 128, 100, [0.01, 0.02]),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown simulation design {design}"
                )))
            }
        };
        Ok((
            TrainConfig {
                depth,
                width,
                epochs,
                minibatch,
                early_stop_patience: patience,
                learning_rate: lrs[0],
                seed: 0,
            },
            lrs,
        ))
    }
}

/// Candidate grid: depth in {2, 3} x width in {10, 16, 20, 32} x the given
/// learning rates, with epochs, minibatch and patience taken from `base`.
pub fn default_grid(base: &TrainConfig, learning_rates: &[f64]) -> Vec<TrainConfig> {
    let mut grid = Vec::new();
    for depth in [2, 3] {
        for width in [10, 16, 20, 32] {
            for &lr in learning_rates {
                grid.push(TrainConfig {
                    depth,
                    width,
                    learning_rate: lr,
                    ..base.clone()
                });
            }
        }
    }
    grid
}

/// Grid that varies only the learning rate of `base`.
pub fn learning_rate_grid(base: &TrainConfig, learning_rates: &[f64]) -> Vec<TrainConfig> {
    learning_rates
        .iter()
        .map(|&lr| TrainConfig {
            learning_rate: lr,
            ..base.clone()
        })
        .collect()
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-7;

/// Adam moment estimates for a list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_hat: f64,
}

impl AdamState {
    pub fn new(block_sizes: &[usize]) -> Self {
        let zeros: Vec<Vec<f64>> = block_sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon_hat: ADAM_EPSILON,
        }
    }

    /// One bias-corrected Adam update applied to every block.
    ///
    /// Fails without touching any state if shapes disagree or a gradient
    /// entry is not finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "adam state has {} blocks, got {} parameter and {} gradient blocks",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[b].len() || g.len() != p.len() {
                return Err(Error::Dimension(format!(
                    "block {b}: state {}, params {}, grads {}",
                    self.first_moment[b].len(),
                    p.len(),
                    g.len()
                )));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient block {b} entry {i} is {}",
                    g[i]
                )));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon_hat);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[b];
            let v = &mut self.second_moment[b];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One epoch's minibatches: a fresh permutation of `0..n` cut into
/// consecutive slices of `minibatch` (the last may be shorter).
pub fn epoch_batches(n: usize, minibatch: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if n == 0 || minibatch == 0 || minibatch > n {
        return Err(Error::InvalidArgument(format!(
            "minibatch {minibatch} invalid for {n} samples"
        )));
    }
    let perm = rng.shuffled_indices(n);
    Ok(perm.chunks(minibatch).map(|c| c.to_vec()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Patience-based early stopping on a validation loss checked once per
/// epoch. Keeps a snapshot of whatever state produced the best loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping<S> {
    patience: usize,
    epoch: usize,
    best_loss: f64,
    best_epoch: usize,
    since_best: usize,
    snapshot: Option<S>,
}

impl<S> EarlyStopping<S> {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        Ok(Self {
            patience,
            epoch: 0,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
            snapshot: None,
        })
    }

    /// Records the loss of the next epoch. Only strict improvements count;
    /// a NaN loss never improves.
    pub fn update(&mut self, val_loss: f64, snapshot: impl FnOnce() -> S) -> StopDecision {
        self.epoch += 1;
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = self.epoch;
            self.since_best = 0;
            self.snapshot = Some(snapshot());
        } else {
            self.since_best += 1;
        }
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn into_snapshot(self) -> Option<S> {
        self.snapshot
    }
}

/// Per-epoch record of a training run. Epochs are counted from 1; a run
/// with no epochs has `stopped_epoch == best_epoch == 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean minibatch loss over each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch
            .checked_sub(1)
            .and_then(|i| self.val_loss.get(i).copied())
    }
}

/// Outcome of [`tune`].
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best: TrainConfig,
    pub best_index: usize,
    /// Hold-out mean check loss per candidate; `None` where the fit failed.
    pub scores: Vec<Option<f64>>,
}

/// Picks the candidate with the lowest hold-out check loss.
///
/// The data are split 80/20 once; every candidate is fitted on the 80% part
/// and scored on the rest. Ties go to the earlier candidate.
pub fn tune(
    grid: &[TrainConfig],
    data: &Dataset,
    tau: QuantileLevel,
    mode: Mode,
    rng: &Rng,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("tuning grid is empty".into()));
    }
    let (train, holdout) = data.split(0.8, &mut rng.child(0))?;
    let scores: Vec<Option<f64>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let mut cand_rng = rng.child(i as u64 + 1);
            let scored = fit(&train, tau, mode, cfg, &mut cand_rng)
                .and_then(|f| residuals(&f, &holdout))
                .and_then(|r| mean_check_loss(&r, tau));
            match scored {
                Ok(s) if s.is_finite() => Some(s),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("tuning candidate {i} failed: {e}");
                    None
                }
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    let (best_index, _) = best.ok_or_else(|| {
        Error::InvalidArgument(format!("all {} tuning candidates failed", grid.len()))
    })?;
    Ok(TuneResult {
        best: grid[best_index].clone(),
        best_index,
        scores,
    })
}
