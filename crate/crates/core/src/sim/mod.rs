//! Simulation designs, evaluation metrics and replicated experiments.

pub mod dgp;
pub mod experiment;
pub mod metrics;

pub use dgp::{generate, true_quantile, DgpSpec, ScaleReading};
pub use experiment::{run_experiment, ExperimentOptions, ExperimentReport, Tuning};
