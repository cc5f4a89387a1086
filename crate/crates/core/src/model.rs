//! The partially linear quantile regression estimator.
//!
//! The model is `Q_τ(Y | X, Z) = Xᵀθ + m(Z)` with `m` a ReLU network. Both
//! parts are trained together by minibatch Adam on the mean check loss.
//! There is no intercept in the linear block; the network's output bias
//! carries the level.

use serde::{Deserialize, Serialize};

use crate::densemath::{dot, Matrix};
use crate::error::{dim_err, Error, Result};
use crate::loss::{check_loss, loss_subgrad_wrt_pred, QuantileLevel};
use crate::network::{width_chain, NetworkGrads, NetworkParams, Workspace};
use crate::optim::{epoch_batches, AdamState, EarlyStopping, StopDecision, TrainConfig, TrainHistory};
use crate::rng::Rng;

/// Which members of the model family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Linear block plus a deep ReLU network.
    Dplqr,
    /// Fully linear: the network is a single affine layer on `Z`.
    Lqr,
    /// Fully nonparametric: all covariates feed the network, no linear block.
    Dnqr,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Dplqr => "dplqr",
            Mode::Lqr => "lqr",
            Mode::Dnqr => "dnqr",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dplqr" => Ok(Mode::Dplqr),
            "lqr" => Ok(Mode::Lqr),
            "dnqr" => Ok(Mode::Dnqr),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

/// Responses with their linear (`X`) and nonparametric (`Z`) covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Matrix,
    z: Matrix,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Matrix, z: Matrix) -> Result<Self> {
        if x.rows() != y.len() || z.rows() != y.len() {
            return dim_err(format!(
                "{} responses but X has {} rows and Z has {} rows",
                y.len(),
                x.rows(),
                z.rows()
            ));
        }
        if x.cols() == 0 && z.cols() == 0 {
            return Err(Error::InvalidArgument("dataset has no covariates".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("response {i} is not finite")));
        }
        Ok(Self { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn q(&self) -> usize {
        self.z.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(idx),
            z: self.z.select_rows(idx),
        }
    }

    /// Shuffled split into a `frac` part and the remainder; both parts keep
    /// at least one row.
    pub fn split(&self, frac: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        let (a, b) = split_indices(self.n(), frac, rng)?;
        Ok((self.select(&a), self.select(&b)))
    }

    /// The same data laid out for `mode`: DNQR moves every covariate into `Z`.
    pub fn for_mode(&self, mode: Mode) -> Result<Dataset> {
        match mode {
            Mode::Dnqr => Ok(Dataset {
                y: self.y.clone(),
                x: Matrix::zeros(self.n(), 0),
                z: self.x.hstack(&self.z)?,
            }),
            Mode::Dplqr | Mode::Lqr => Ok(self.clone()),
        }
    }

    pub fn with_response(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(y, self.x.clone(), self.z.clone())
    }
}

/// Shuffled index split. The first part gets `round(frac * n)` rows, clamped
/// so both parts are non-empty.
pub fn split_indices(n: usize, frac: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} rows")));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {frac} outside (0, 1)")));
    }
    let k = ((frac * n as f64).round() as usize).clamp(1, n - 1);
    let perm = rng.shuffled_indices(n);
    Ok((perm[..k].to_vec(), perm[k..].to_vec()))
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlqrFit {
    pub theta_hat: Vec<f64>,
    pub network: NetworkParams,
    pub tau: QuantileLevel,
    pub history: TrainHistory,
    pub mode: Mode,
}

impl PlqrFit {
    /// Estimated nonparametric component `m̂(z)`. For DNQR the input is `(x, z)`.
    pub fn m_hat(&self, z: &[f64]) -> Result<f64> {
        self.network.forward(z)
    }
}

/// Adjusts a base configuration for `mode`: LQR collapses the network to a
/// single affine layer (width unused); the other modes keep `base`.
pub fn make_mode_config(mode: Mode, base: &TrainConfig) -> TrainConfig {
    match mode {
        Mode::Lqr => TrainConfig {
            depth: 1,
            width: 1,
            ..base.clone()
        },
        Mode::Dplqr | Mode::Dnqr => base.clone(),
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Objective {
    Check(QuantileLevel),
    Squared,
}

impl Objective {
    #[inline]
    fn loss(self, residual: f64) -> f64 {
        match self {
            Objective::Check(tau) => check_loss(residual, tau),
            Objective::Squared => residual * residual,
        }
    }

    #[inline]
    fn dpred(self, residual: f64) -> f64 {
        match self {
            Objective::Check(tau) => loss_subgrad_wrt_pred(residual, tau),
            Objective::Squared => -2.0 * residual,
        }
    }
}

pub(crate) struct Trained {
    pub theta: Vec<f64>,
    pub network: NetworkParams,
    pub history: TrainHistory,
}

/// Minibatch Adam on `mean objective(y - xᵀθ - m(z))`, updating `θ` and every
/// layer jointly, with early stopping on an internal 80/20 split.
///
/// `θ` starts at zero and the network at Glorot-uniform weights. A minibatch
/// larger than the training part is clamped to it.
pub(crate) fn train(
    x: &Matrix,
    z: &Matrix,
    y: &[f64],
    objective: Objective,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Trained> {
    config.validate()?;
    let n = y.len();
    if x.rows() != n || z.rows() != n {
        return dim_err(format!("{n} responses, X rows {}, Z rows {}", x.rows(), z.rows()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot train on {n} rows")));
    }
    let p = x.cols();
    let widths = width_chain(z.cols(), config.depth, config.width);

    let mut init_rng = rng.child(0);
    let mut split_rng = rng.child(1);
    let mut batch_rng = rng.child(2);

    let mut network = NetworkParams::init(&widths, &mut init_rng)?;
    let mut theta = vec![0.0; p];
    let (train_idx, val_idx) = split_indices(n, 0.8, &mut split_rng)?;
    let minibatch = config.minibatch.min(train_idx.len());

    let mut block_sizes = vec![p];
    block_sizes.extend(network.layers().iter().map(|l| l.as_slice().len()));
    let mut adam = AdamState::new(&block_sizes);

    let mut ws = Workspace::new(&network);
    let mut net_grads = NetworkGrads::zeros_like(&network);
    let mut theta_grad = vec![0.0; p];
    let mut history = TrainHistory::default();
    let mut monitor = EarlyStopping::new(config.early_stop_patience)?;

    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0;
        for batch in epoch_batches(train_idx.len(), minibatch, &mut batch_rng)? {
            net_grads.fill_zero();
            theta_grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &b in &batch {
                let i = train_idx[b];
                let (xi, zi) = (x.row(i), z.row(i));
                let pred = dot(xi, &theta) + network.forward_with(zi, &mut ws);
                let r = y[i] - pred;
                epoch_loss += objective.loss(r);
                let g = objective.dpred(r) * scale;
                for (tg, xv) in theta_grad.iter_mut().zip(xi) {
                    *tg += g * xv;
                }
                network.accumulate_backward(zi, &mut ws, g, &mut net_grads);
            }
            let mut params: Vec<&mut [f64]> = Vec::with_capacity(block_sizes.len());
            params.push(&mut theta[..]);
            params.extend(network.layers_mut().iter_mut().map(|l| l.as_mut_slice()));
            let mut grads: Vec<&[f64]> = Vec::with_capacity(block_sizes.len());
            grads.push(&theta_grad[..]);
            grads.extend(net_grads.layers.iter().map(|l| l.as_slice()));
            adam.step(&mut params, &grads, config.learning_rate)?;
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss {train_loss} at epoch {epoch}"
            )));
        }

        let mut val = 0.0;
        for &i in &val_idx {
            let pred = dot(x.row(i), &theta) + network.forward_with(z.row(i), &mut ws);
            val += objective.loss(y[i] - pred);
        }
        let val_loss = val / val_idx.len() as f64;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.stopped_epoch = epoch;

        let decision = monitor.update(val_loss, || (theta.clone(), network.clone()));
        if decision == StopDecision::Stop {
            break;
        }
    }

    history.best_epoch = monitor.best_epoch();
    if let Some((best_theta, best_net)) = monitor.into_snapshot() {
        theta = best_theta;
        network = best_net;
    }
    Ok(Trained {
        theta,
        network,
        history,
    })
}

/// Fits the model at quantile level `tau`.
pub fn fit(
    data: &Dataset,
    tau: QuantileLevel,
    mode: Mode,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<PlqrFit> {
    let data = data.for_mode(mode)?;
    let cfg = make_mode_config(mode, config);
    let t = train(data.x(), data.z(), data.y(), Objective::Check(tau), &cfg, rng)?;
    Ok(PlqrFit {
        theta_hat: t.theta,
        network: t.network,
        tau,
        history: t.history,
        mode,
    })
}

/// `xᵀθ̂ + m̂(z)`; for DNQR the network sees `(x, z)`.
pub fn predict(fit: &PlqrFit, x: &[f64], z: &[f64]) -> Result<f64> {
    match fit.mode {
        Mode::Dnqr => {
            let input: Vec<f64> = x.iter().chain(z).copied().collect();
            fit.network.forward(&input)
        }
        Mode::Dplqr | Mode::Lqr => {
            if x.len() != fit.theta_hat.len() {
                return dim_err(format!(
                    "model has {} linear coefficients, got {} values",
                    fit.theta_hat.len(),
                    x.len()
                ));
            }
            Ok(dot(x, &fit.theta_hat) + fit.network.forward(z)?)
        }
    }
}

pub fn predict_all(fit: &PlqrFit, data: &Dataset) -> Result<Vec<f64>> {
    (0..data.n())
        .map(|i| predict(fit, data.x().row(i), data.z().row(i)))
        .collect()
}

/// `Y_i - Ŷ_i` for every row.
pub fn residuals(fit: &PlqrFit, data: &Dataset) -> Result<Vec<f64>> {
    let preds = predict_all(fit, data)?;
    Ok(data.y().iter().zip(preds).map(|(y, p)| y - p).collect())
}
