//! Simulation designs.
//!
//! Covariates come from a 12-dimensional Gaussian copula with uniform
//! `[0, 2]` marginals and normal-score correlation 0.5: the first ten
//! coordinates form `Z`, `X_1 = 1(Z̃_11 > 1)` and `X_2 = Z̃_12`. The
//! response is `Y = Xᵀθ + m(Z) + σ(X, Z) ε` with `θ = (1, -1)` and `ε`
//! Student t with 3 degrees of freedom.
//!
//! Designs 1-3 are homoscedastic (`σ = 1`) with a linear, additive and deep
//! `m`. Designs 4-6 reuse the `m` of 1-3 with a covariate-dependent scale.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::densemath::{cholesky, Matrix};
use crate::error::{Error, Result};
use crate::loss::QuantileLevel;
use crate::model::Dataset;
use crate::rng::{std_normal_cdf, Rng};

pub const TRUE_THETA: [f64; 2] = [1.0, -1.0];
pub const COPULA_DIM: usize = 12;
pub const COPULA_RHO: f64 = 0.5;
pub const Z_DIM: usize = 10;

/// How the `x₁ + x₁` term of the heteroscedastic scales is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleReading {
    /// `x₁ + x₂`.
    #[default]
    SumBoth,
    /// `2 x₁`, taken literally.
    DoubleFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub case: u8,
    pub n: usize,
    pub tau: QuantileLevel,
    #[serde(default)]
    pub scale_reading: ScaleReading,
}

impl DgpSpec {
    pub fn new(case: u8, n: usize, tau: QuantileLevel) -> Result<Self> {
        if !(1..=6).contains(&case) {
            return Err(Error::InvalidArgument(format!(
                "simulation case must be 1..=6, got {case}"
            )));
        }
        if n < 50 {
            return Err(Error::InvalidArgument(format!(
                "simulation sample size must be at least 50, got {n}"
            )));
        }
        Ok(Self {
            case,
            n,
            tau,
            scale_reading: ScaleReading::SumBoth,
        })
    }

    pub fn is_heteroscedastic(&self) -> bool {
        self.case >= 4
    }

    /// Case number of the mean function (4, 5, 6 reuse 1, 2, 3).
    pub fn m_case(&self) -> u8 {
        if self.case > 3 {
            self.case - 3
        } else {
            self.case
        }
    }

    pub fn m(&self, z: &[f64]) -> Result<f64> {
        m_case(self.m_case(), z)
    }

    pub fn scale(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if self.is_heteroscedastic() {
            sigma1_case(self.case, x, z, self.scale_reading)
        } else {
            Ok(1.0)
        }
    }

    /// Slope of the τ-quantile, `θ + t_τ θ*` (`θ* = 0` for designs 1-3).
    pub fn theta_tau(&self) -> [f64; 2] {
        let t = t3_quantile(self.tau.get());
        let star = self.theta_star();
        [TRUE_THETA[0] + t * star[0], TRUE_THETA[1] + t * star[1]]
    }

    fn theta_star(&self) -> [f64; 2] {
        let c = match self.case {
            4 => 1.0 / 5.0,
            5 => 1.0 / 3.6,
            6 => 1.0 / 3.0,
            _ => return [0.0, 0.0],
        };
        match self.scale_reading {
            ScaleReading::SumBoth => [c, c],
            ScaleReading::DoubleFirst => [2.0 * c, 0.0],
        }
    }

    /// The `z`-part of the τ-quantile, `m(z) + t_τ m*(z)`; for designs 1-3
    /// `m*` is the constant 1.
    pub fn m_tau(&self, z: &[f64]) -> Result<f64> {
        let t = t3_quantile(self.tau.get());
        let star = if self.is_heteroscedastic() {
            scale_z_part(self.case, z)?
        } else {
            1.0
        };
        Ok(self.m(z)? + t * star)
    }
}

fn check_z(z: &[f64]) -> Result<()> {
    if z.len() != Z_DIM {
        return Err(Error::Dimension(format!(
            "design functions take {Z_DIM} z-coordinates, got {}",
            z.len()
        )));
    }
    Ok(())
}

/// Mean function of designs 1 (linear), 2 (additive) and 3 (deep).
pub fn m_case(case: u8, z: &[f64]) -> Result<f64> {
    check_z(z)?;
    match case {
        1 => Ok(0.95 * z.iter().sum::<f64>()),
        2 => Ok(1.1
            * (z[0].powi(3) - 3.0 * z[1].powi(2)
                + 2.0 * (6.0 * PI * z[2]).sin()
                + (z[3] + 0.5).ln()
                + (z[4] + 2.0).sqrt()
                + (z[5] / 2.0).exp()
                + 0.5 * (z[6] - 1.0 + (z[6] - 1.0).abs())
                + 1.0 / (z[7] + 2.0)
                + 2.0 * (-z[8] / 2.0).exp()
                + (PI * z[9]).cos())),
        3 => {
            let centered: f64 = z.iter().map(|v| v - 1.0).sum();
            Ok(0.51
                * (z[0] * z[1]
                    + z[1] * (1.0 - (PI * z[2] * z[3]).cos())
                    + 2.0 * z[4].sin() / ((z[4] - z[5]).abs() + 2.0)
                    + (z[5] + z[6] * z[7] - 1.0).powi(2)
                    + (z[8] * z[8] + z[9] * z[9] + 2.0).sqrt()
                    + (centered / 5.0).exp()))
        }
        _ => Err(Error::InvalidArgument(format!(
            "mean function defined for cases 1-3, got {case}"
        ))),
    }
}

// z-part m*(z) of the heteroscedastic scale.
fn scale_z_part(case: u8, z: &[f64]) -> Result<f64> {
    check_z(z)?;
    match case {
        4 => Ok(z.iter().sum::<f64>() / 5.0),
        5 => Ok(z.iter().map(|v| (v - 0.2).abs()).sum::<f64>() / 3.6),
        6 => {
            let centered: f64 = z.iter().map(|v| v - 1.0).sum();
            Ok(3.0 * std_normal_cdf(centered / 5.0))
        }
        _ => Err(Error::InvalidArgument(format!(
            "scale function defined for cases 4-6, got {case}"
        ))),
    }
}

/// Error scale `σ₁(x, z)` of designs 4-6.
pub fn sigma1_case(case: u8, x: &[f64], z: &[f64], reading: ScaleReading) -> Result<f64> {
    if x.len() != 2 {
        return Err(Error::Dimension(format!(
            "design functions take 2 x-coordinates, got {}",
            x.len()
        )));
    }
    let xs = match reading {
        ScaleReading::SumBoth => x[0] + x[1],
        ScaleReading::DoubleFirst => 2.0 * x[0],
    };
    let zpart = scale_z_part(case, z)?;
    let xpart = match case {
        4 => xs / 5.0,
        5 => xs / 3.6,
        6 => xs / 3.0,
        _ => unreachable!("validated by scale_z_part"),
    };
    Ok(xpart + zpart)
}

/// CDF of the Student t distribution with 3 degrees of freedom.
pub fn t3_cdf(t: f64) -> f64 {
    let s = t / 3f64.sqrt();
    0.5 + (s / (1.0 + s * s) + s.atan()) / PI
}

/// Quantile of the Student t distribution with 3 degrees of freedom, by
/// bisection on the closed-form CDF. Exactly antisymmetric about 1/2.
pub fn t3_quantile(tau: f64) -> f64 {
    assert!(tau > 0.0 && tau < 1.0, "quantile level {tau} outside (0, 1)");
    if tau == 0.5 {
        return 0.0;
    }
    if tau < 0.5 {
        return -t3_quantile(1.0 - tau);
    }
    let mut hi = 1.0;
    while t3_cdf(hi) < tau {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t3_cdf(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[inline]
pub fn t3_draw(rng: &mut Rng) -> f64 {
    let num = rng.std_normal();
    let mut chi2 = 0.0;
    for _ in 0..3 {
        let g = rng.std_normal();
        chi2 += g * g;
    }
    num / (chi2 / 3.0).sqrt()
}

/// `n` draws of `N / √(χ²₃ / 3)`.
pub fn sample_t3(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| t3_draw(rng)).collect()
}

/// `n x dim` draws from a Gaussian copula with equicorrelation `rho`,
/// pushed to uniform `[0, 2]` marginals.
pub fn sample_copula(n: usize, dim: usize, rho: f64, rng: &mut Rng) -> Result<Matrix> {
    if dim == 0 {
        return Err(Error::InvalidArgument("copula dimension must be positive".into()));
    }
    let lower = if dim > 1 { -1.0 / (dim as f64 - 1.0) } else { -1.0 };
    if !(rho > lower && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "equicorrelation {rho} must lie in ({lower}, 1) for dimension {dim}"
        )));
    }
    let mut r = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            r[(i, j)] = if i == j { 1.0 } else { rho };
        }
    }
    let l = cholesky(&r)?;
    let mut out = Matrix::zeros(n, dim);
    let mut g = vec![0.0; dim];
    for i in 0..n {
        for v in g.iter_mut() {
            *v = rng.std_normal();
        }
        let row = out.row_mut(i);
        for a in 0..dim {
            let mut w = 0.0;
            for b in 0..=a {
                w += l[(a, b)] * g[b];
            }
            row[a] = 2.0 * std_normal_cdf(w);
        }
    }
    Ok(out)
}

/// Splits 12-column copula draws into `X` (n x 2) and `Z` (n x 10).
pub fn make_covariates(draws: &Matrix) -> Result<(Matrix, Matrix)> {
    if draws.cols() != COPULA_DIM {
        return Err(Error::Dimension(format!(
            "expected {COPULA_DIM} copula columns, got {}",
            draws.cols()
        )));
    }
    let n = draws.rows();
    let mut x = Matrix::zeros(n, 2);
    let mut z = Matrix::zeros(n, Z_DIM);
    for i in 0..n {
        let r = draws.row(i);
        z.row_mut(i).copy_from_slice(&r[..Z_DIM]);
        x[(i, 0)] = if r[10] > 1.0 { 1.0 } else { 0.0 };
        x[(i, 1)] = r[11];
    }
    Ok((x, z))
}

/// True conditional τ-quantile `xᵀθ_τ + m_τ(z)`.
pub fn true_quantile(spec: &DgpSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != 2 {
        return Err(Error::Dimension(format!("expected 2 x-coordinates, got {}", x.len())));
    }
    let th = spec.theta_tau();
    Ok(x[0] * th[0] + x[1] * th[1] + spec.m_tau(z)?)
}

/// One response at fixed covariates.
pub fn simulate_response(spec: &DgpSpec, x: &[f64], z: &[f64], eps: f64) -> Result<f64> {
    Ok(x[0] * TRUE_THETA[0] + x[1] * TRUE_THETA[1] + spec.m(z)? + spec.scale(x, z)? * eps)
}

/// Responses for given covariates and errors.
pub fn assemble(spec: &DgpSpec, x: Matrix, z: Matrix, eps: &[f64]) -> Result<Dataset> {
    if eps.len() != x.rows() {
        return Err(Error::Dimension(format!(
            "{} errors for {} rows",
            eps.len(),
            x.rows()
        )));
    }
    let y = (0..x.rows())
        .map(|i| simulate_response(spec, x.row(i), z.row(i), eps[i]))
        .collect::<Result<Vec<f64>>>()?;
    Dataset::new(y, x, z)
}

/// A full simulated dataset of `spec.n` rows (p = 2, q = 10).
pub fn generate(spec: &DgpSpec, rng: &mut Rng) -> Result<Dataset> {
    let draws = sample_copula(spec.n, COPULA_DIM, COPULA_RHO, rng)?;
    let (x, z) = make_covariates(&draws)?;
    let eps = sample_t3(spec.n, rng);
    assemble(spec, x, z, &eps)
}
