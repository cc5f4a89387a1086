//! Asymptotic covariance of `θ̂` under homoscedastic errors and Wald intervals.
//!
//! `Σ̂ = τ(1-τ) Ω̂⁻¹ / f̂(0)²`, where `f̂(0)` is a Gaussian kernel density
//! estimate of the residual density at zero and `Ω̂` is the sample covariance
//! of `V_i = X_i - φ̂(Z_i)`, with `φ̂_k` a network least-squares regression of
//! the `k`-th linear covariate on `Z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densemath::{sample_covariance, sample_iqr, sample_sd, sym_inverse, Matrix};
use crate::error::{Error, Result};
use crate::model::{make_mode_config, residuals, train, Dataset, Mode, Objective, PlqrFit};
use crate::network::NetworkParams;
use crate::optim::{TrainConfig, TrainHistory};
use crate::rng::{std_normal_quantile, Rng};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Rule-of-thumb bandwidth `0.9 min(sd, IQR/1.34) n^(-1/5)`; falls back to
/// the standard deviation when the IQR is zero.
pub fn silverman_bandwidth(v: &[f64]) -> Result<f64> {
    let sd = sample_sd(v)?;
    let iqr = sample_iqr(v)?;
    let mut spread = sd.min(iqr / 1.34);
    if spread <= 0.0 {
        spread = sd;
    }
    if !(spread > 0.0) {
        return Err(Error::Degenerate(
            "all residuals are identical; bandwidth would be zero".into(),
        ));
    }
    Ok(0.9 * spread * (v.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate of the sample `v` at `at`.
pub fn gaussian_kde_at(v: &[f64], at: f64, bandwidth: f64) -> f64 {
    let s: f64 = v
        .iter()
        .map(|&e| {
            let u = (at - e) / bandwidth;
            (-0.5 * u * u).exp()
        })
        .sum();
    s * INV_SQRT_2PI / (v.len() as f64 * bandwidth)
}

/// Density of the residuals at zero.
pub fn kde_at_zero(residuals: &[f64]) -> Result<f64> {
    if residuals.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "density at zero needs at least 10 residuals, got {}",
            residuals.len()
        )));
    }
    let h = silverman_bandwidth(residuals)?;
    let f = gaussian_kde_at(residuals, 0.0, h);
    if !(f > 0.0) {
        return Err(Error::Degenerate(format!(
            "estimated residual density at zero is {f}"
        )));
    }
    Ok(f)
}

/// Least-squares network regression of one linear covariate on `Z`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficient: usize,
    pub network: NetworkParams,
    pub history: TrainHistory,
}

impl Projection {
    pub fn predict(&self, z: &[f64]) -> Result<f64> {
        self.network.forward(z)
    }
}

/// Regresses `X_k` on `Z` with squared-error loss, using the same
/// architecture and Adam machinery as the quantile fit.
pub fn fit_projection(
    data: &Dataset,
    k: usize,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Projection> {
    if k >= data.p() {
        return Err(Error::InvalidArgument(format!(
            "coefficient {k} out of range for p = {}",
            data.p()
        )));
    }
    let target = data.x().column(k);
    let none = Matrix::zeros(data.n(), 0);
    let t = train(&none, data.z(), &target, Objective::Squared, config, rng)?;
    Ok(Projection {
        coefficient: k,
        network: t.network,
        history: t.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub f0_hat: f64,
    pub omega_hat: Matrix,
    pub sigma_hat: Matrix,
    pub n: usize,
    pub level: f64,
    pub intervals: Vec<(f64, f64)>,
}

/// `τ(1-τ) Ω̂⁻¹ / f̂(0)²`.
pub fn sandwich(tau: f64, omega_hat: &Matrix, f0_hat: f64) -> Result<Matrix> {
    let inv = sym_inverse(omega_hat).map_err(|e| match e {
        Error::Singular { pivot, .. } => Error::SingularCovariance { coefficient: pivot },
        other => other,
    })?;
    Ok(inv.scale(tau * (1.0 - tau) / (f0_hat * f0_hat)))
}

/// Covariance estimate and Wald intervals for `fit.theta_hat`, computed on
/// the data the model was fitted to.
///
/// Projections use the architecture of `config` adjusted for the fit's mode,
/// so an LQR fit gets affine projections.
pub fn covariance(
    fit: &PlqrFit,
    data: &Dataset,
    config: &TrainConfig,
    level: f64,
    rng: &Rng,
) -> Result<CovarianceEstimate> {
    if fit.mode == Mode::Dnqr || data.p() == 0 {
        return Err(Error::InvalidArgument(
            "covariance needs at least one linear covariate".into(),
        ));
    }
    let p = data.p();
    let res = residuals(fit, data)?;
    let f0_hat = kde_at_zero(&res)?;

    let cfg = make_mode_config(fit.mode, config);
    let projections: Vec<Projection> = (0..p)
        .into_par_iter()
        .map(|k| fit_projection(data, k, &cfg, &mut rng.child(k as u64)))
        .collect::<Result<_>>()?;

    let n = data.n();
    let mut v = Matrix::zeros(n, p);
    for i in 0..n {
        let zi = data.z().row(i);
        let xi = data.x().row(i);
        for (k, proj) in projections.iter().enumerate() {
            v[(i, k)] = xi[k] - proj.predict(zi)?;
        }
    }
    let omega_hat = sample_covariance(&v)?;
    let sigma_hat = sandwich(fit.tau.get(), &omega_hat, f0_hat)?;
    let intervals = confidence_intervals(&fit.theta_hat, &sigma_hat, n, level)?;
    Ok(CovarianceEstimate {
        f0_hat,
        omega_hat,
        sigma_hat,
        n,
        level,
        intervals,
    })
}

/// `θ̂_k ± z_{(1+level)/2} √(Σ̂_kk / n)`.
pub fn confidence_intervals(
    theta_hat: &[f64],
    sigma_hat: &Matrix,
    n: usize,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if sigma_hat.rows() != theta_hat.len() || sigma_hat.cols() != theta_hat.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients but covariance is {}x{}",
            theta_hat.len(),
            sigma_hat.rows(),
            sigma_hat.cols()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let z = std_normal_quantile(0.5 * (1.0 + level));
    theta_hat
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let var = sigma_hat[(k, k)];
            if !(var >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "covariance diagonal entry {k} is {var}"
                )));
            }
            let half = z * (var / n as f64).sqrt();
            Ok((t - half, t + half))
        })
        .collect()
}
