//! Deep partially linear quantile regression.
//!
//! The conditional `τ`-quantile of a response is modelled as
//! `Q_τ(Y | X, Z) = Xᵀθ + m(Z)`, with `θ` estimated jointly with a ReLU
//! network for `m` by minimizing the check loss. [`inference`] provides the
//! asymptotic covariance of `θ̂` and Wald intervals, and [`sim`] the
//! simulation designs used to study the estimator.
//!
//! ```no_run
//! use dplqr::{fit, Dataset, Mode, QuantileLevel, Rng, TrainConfig};
//! # fn data() -> Dataset { unimplemented!() }
//! let d: Dataset = data();
//! let tau = QuantileLevel::new(0.5).unwrap();
//! let f = fit(&d, tau, Mode::Dplqr, &TrainConfig::default(), &mut Rng::new(1)).unwrap();
//! println!("{:?}", f.theta_hat);
//! ```

pub mod cli;
pub mod densemath;
pub mod error;
pub mod inference;
pub mod io;
pub mod loss;
pub mod model;
pub mod network;
pub mod optim;
pub mod rng;
pub mod sim;

pub use densemath::Matrix;
pub use error::{Error, Result};
pub use inference::{covariance, CovarianceEstimate};
pub use loss::{check_loss, QuantileLevel};
pub use model::{fit, predict, predict_all, residuals, Dataset, Mode, PlqrFit};
pub use network::NetworkParams;
pub use optim::{tune, TrainConfig};
pub use rng::Rng;
