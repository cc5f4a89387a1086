//! Check (pinball) loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile level, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::InvalidArgument(format!(
                "quantile level {tau} must lie strictly between 0 and 1"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    pub const MEDIAN: QuantileLevel = QuantileLevel(0.5);
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(q: QuantileLevel) -> f64 {
        q.0
    }
}

/// `ρ_τ(t) = t (τ - 1{t < 0})`.
#[inline]
pub fn check_loss(t: f64, tau: QuantileLevel) -> f64 {
    let tau = tau.get();
    if t < 0.0 {
        (tau - 1.0) * t
    } else {
        tau * t
    }
}

/// Derivative of `ρ_τ(y - ŷ)` with respect to `ŷ`, given the residual `y - ŷ`.
/// At a zero residual the strict indicator gives `-τ`.
#[inline]
pub fn loss_subgrad_wrt_pred(residual: f64, tau: QuantileLevel) -> f64 {
    let ind = if residual < 0.0 { 1.0 } else { 0.0 };
    -(tau.get() - ind)
}

pub fn mean_check_loss(residuals: &[f64], tau: QuantileLevel) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::InvalidArgument("mean check loss of no residuals".into()));
    }
    Ok(residuals.iter().map(|&r| check_loss(r, tau)).sum::<f64>() / residuals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(t: f64) -> QuantileLevel {
        QuantileLevel::new(t).unwrap()
    }

    #[test]
    fn level_must_be_interior() {
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert!(QuantileLevel::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<QuantileLevel>("1.5").is_err());
        assert_eq!(serde_json::from_str::<QuantileLevel>("0.25").unwrap().get(), 0.25);
    }

    #[test]
    fn check_loss_examples() {
        assert_eq!(check_loss(0.0, q(0.3)), 0.0);
        assert_eq!(check_loss(1.0, q(0.5)), 0.5);
        assert!((check_loss(-1.0, q(0.2)) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(loss_subgrad_wrt_pred(2.0, q(0.5)), -0.5);
        assert_eq!(loss_subgrad_wrt_pred(-2.0, q(0.5)), 0.5);
        assert_eq!(loss_subgrad_wrt_pred(0.0, q(0.2)), -0.2);
    }

    #[test]
    fn mean_loss_examples() {
        assert_eq!(mean_check_loss(&[1.0, -1.0], q(0.5)).unwrap(), 0.5);
        assert_eq!(mean_check_loss(&[0.0, 0.0, 0.0], q(0.7)).unwrap(), 0.0);
        assert_eq!(mean_check_loss(&[2.0, -4.0], q(0.5)).unwrap(), 1.5);
        assert!(mean_check_loss(&[], q(0.5)).is_err());
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative_and_zero_only_at_origin(t in -1e6f64..1e6, tau in 0.001f64..0.999) {
            let l = check_loss(t, q(tau));
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, t == 0.0);
        }

        #[test]
        fn reflection_identity(t in -1e3f64..1e3, tau in 0.001f64..0.999) {
            let a = check_loss(t, q(tau));
            let b = check_loss(-t, q(1.0 - tau));
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn subgradient_matches_finite_difference(y in -10.0f64..10.0, yhat in -10.0f64..10.0, tau in 0.01f64..0.99) {
            let r = y - yhat;
            prop_assume!(r.abs() > 1e-3);
            let h = 1e-6;
            let fd = (check_loss(y - (yhat + h), q(tau)) - check_loss(y - (yhat - h), q(tau))) / (2.0 * h);
            prop_assert!((fd - loss_subgrad_wrt_pred(r, q(tau))).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_minimizer_is_an_empirical_quantile() {
        // The check loss of a constant predictor is piecewise linear with
        // kinks at the sample points, so its minimum is attained at an
        // order statistic. Compare against the sorted-order oracle.
        let sample = [3.1, -0.4, 2.2, 7.5, 0.0, 1.3, -2.8, 4.4, 5.0, 0.9];
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        for tau in [0.2, 0.5, 0.8] {
            let loss_at = |c: f64| {
                let r: Vec<f64> = sample.iter().map(|y| y - c).collect();
                mean_check_loss(&r, q(tau)).unwrap()
            };
            let best = sorted
                .iter()
                .copied()
                .min_by(|a, b| loss_at(*a).total_cmp(&loss_at(*b)))
                .unwrap();
            // Oracle: the ceil(n tau)-th order statistic.
            let k = ((sample.len() as f64 * tau).ceil() as usize).max(1) - 1;
            assert!((loss_at(best) - loss_at(sorted[k])).abs() < 1e-12);
        }
    }
}
