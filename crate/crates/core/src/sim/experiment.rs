//! Replicated simulation runs and their aggregate report.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densemath::{mean, sample_sd};
use crate::error::{Error, Result};
use crate::inference::covariance;
use crate::model::{fit, make_mode_config, predict_all, Dataset, Mode};
use crate::optim::{default_grid, learning_rate_grid, tune, TrainConfig};
use crate::rng::Rng;
use crate::sim::dgp::{generate, DgpSpec};
use crate::sim::metrics::{level_shift, mspe, rmse_m};

/// How tuning parameters are chosen inside each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tuning {
    /// Depth {2, 3} x width {10, 16, 20, 32} x the design's two learning rates.
    FullGrid,
    /// The design's selected depth and width, tuned over its two learning rates.
    LearningRates,
    /// The design's selected configuration with its first learning rate.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub methods: Vec<Mode>,
    pub tuning: Tuning,
    pub ci_level: f64,
    /// Shift `m̂` by its mean discrepancy before scoring it.
    pub align_level: bool,
    /// Thread count for replicate fan-out; 0 uses the global pool.
    pub workers: usize,
    /// Replaces the design's preset configuration when set.
    pub base_config: Option<TrainConfig>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            methods: vec![Mode::Lqr, Mode::Dplqr],
            tuning: Tuning::FullGrid,
            ci_level: 0.95,
            align_level: false,
            workers: 0,
            base_config: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub mode: Mode,
    pub theta_hat: Vec<f64>,
    pub intervals: Option<Vec<(f64, f64)>>,
    pub rmse_m: Option<f64>,
    pub mspe: f64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mode: Mode,
    pub bias: Vec<f64>,
    pub sd: Vec<f64>,
    pub coverage: Option<Vec<f64>>,
    pub mean_rmse_m: Option<f64>,
    pub mean_mspe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: DgpSpec,
    pub master_seed: u64,
    pub options: ExperimentOptions,
    pub theta_tau: [f64; 2],
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub failed: Vec<usize>,
    pub methods: Vec<MethodSummary>,
    pub replicates: Vec<ReplicateResult>,
}

fn mode_tag(mode: Mode) -> u64 {
    match mode {
        Mode::Dplqr => 1,
        Mode::Lqr => 2,
        Mode::Dnqr => 3,
    }
}

fn candidate_grid(spec: &DgpSpec, mode: Mode, opts: &ExperimentOptions) -> Result<Vec<TrainConfig>> {
    let (preset, lrs) = TrainConfig::for_design(spec.case, spec.n)?;
    let base = opts.base_config.clone().unwrap_or(preset);
    let grid = match opts.tuning {
        Tuning::FullGrid => default_grid(&base, &lrs),
        Tuning::LearningRates => learning_rate_grid(&base, &lrs),
        Tuning::Fixed => vec![base],
    };
    // Mode adjustment can make candidates coincide (LQR ignores depth and width).
    let mut out: Vec<TrainConfig> = Vec::new();
    for c in grid.iter().map(|c| make_mode_config(mode, c)) {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

fn run_method(
    spec: &DgpSpec,
    mode: Mode,
    train: &Dataset,
    test: &Dataset,
    opts: &ExperimentOptions,
    rng: &Rng,
) -> Result<MethodResult> {
    let grid = candidate_grid(spec, mode, opts)?;
    let config = if grid.len() > 1 {
        tune(&grid, train, spec.tau, mode, &rng.child(0))?.best
    } else {
        grid[0].clone()
    };
    let fitted = fit(train, spec.tau, mode, &config, &mut rng.child(1))?;

    let intervals = match mode {
        Mode::Dnqr => None,
        Mode::Dplqr | Mode::Lqr => {
            Some(covariance(&fitted, train, &config, opts.ci_level, &rng.child(2))?.intervals)
        }
    };

    let rmse = match mode {
        Mode::Dnqr => None,
        Mode::Dplqr | Mode::Lqr => {
            let z = test.z();
            let mut m_hat = fitted.network.forward_batch(z)?;
            let m_true = (0..z.rows())
                .map(|i| spec.m_tau(z.row(i)))
                .collect::<Result<Vec<f64>>>()?;
            if opts.align_level {
                let c = level_shift(&m_hat, &m_true)?;
                m_hat.iter_mut().for_each(|v| *v += c);
            }
            Some(rmse_m(&m_hat, &m_true)?)
        }
    };
    let y_hat = predict_all(&fitted, test)?;
    Ok(MethodResult {
        mode,
        theta_hat: fitted.theta_hat,
        intervals,
        rmse_m: rmse,
        mspe: mspe(&y_hat, test.y())?,
        config,
    })
}

/// One replicate: simulate, split 80/20 into training and test rows, then
/// tune, fit and evaluate every method on the same split.
pub fn run_replicate(
    spec: &DgpSpec,
    index: usize,
    opts: &ExperimentOptions,
    master: &Rng,
) -> Result<ReplicateResult> {
    let rng = master.child(index as u64);
    let data = generate(spec, &mut rng.child(0))?;
    let (train, test) = data.split(0.8, &mut rng.child(1))?;
    let methods = opts
        .methods
        .iter()
        .map(|&mode| run_method(spec, mode, &train, &test, opts, &rng.child(100 + mode_tag(mode))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateResult { index, methods })
}

/// Runs `replicates` independent replicates and aggregates them in index
/// order. Failed replicates are dropped with a warning; more than 10%
/// failures abort the run.
pub fn run_experiment(
    spec: &DgpSpec,
    replicates: usize,
    opts: &ExperimentOptions,
    master_seed: u64,
) -> Result<ExperimentReport> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    if opts.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    if !(opts.ci_level > 0.0 && opts.ci_level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level {} outside (0, 1)",
            opts.ci_level
        )));
    }
    let master = Rng::new(master_seed);
    let run_all = || -> Vec<Result<ReplicateResult>> {
        (0..replicates)
            .into_par_iter()
            .map(|r| run_replicate(spec, r, opts, &master))
            .collect()
    };
    let outcomes = if opts.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run_all)
    } else {
        run_all()
    };

    let mut done = Vec::new();
    let mut failed = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => done.push(rep),
            Err(e) => {
                log::warn!("replicate {r} dropped: {e}");
                failed.push(r);
            }
        }
    }
    if failed.len() * 10 > replicates || done.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failed.len(),
            total: replicates,
        });
    }

    let theta_tau = spec.theta_tau();
    let methods = opts
        .methods
        .iter()
        .enumerate()
        .map(|(j, &mode)| summarize(mode, j, &done, &theta_tau))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        spec: *spec,
        master_seed,
        options: opts.clone(),
        theta_tau,
        replicates_requested: replicates,
        replicates_used: done.len(),
        failed,
        methods,
        replicates: done,
    })
}

fn summarize(
    mode: Mode,
    slot: usize,
    reps: &[ReplicateResult],
    theta_tau: &[f64; 2],
) -> Result<MethodSummary> {
    let results: Vec<&MethodResult> = reps.iter().map(|r| &r.methods[slot]).collect();
    let p = results[0].theta_hat.len();
    let mut bias = Vec::with_capacity(p);
    let mut sd = Vec::with_capacity(p);
    for k in 0..p {
        let est: Vec<f64> = results.iter().map(|m| m.theta_hat[k]).collect();
        bias.push(mean(&est)? - theta_tau[k]);
        sd.push(if est.len() > 1 { sample_sd(&est)? } else { 0.0 });
    }
    let coverage = if results.iter().all(|m| m.intervals.is_some()) && p > 0 {
        Some(
            (0..p)
                .map(|k| {
                    let hits = results
                        .iter()
                        .filter(|m| {
                            let (lo, hi) = m.intervals.as_ref().unwrap()[k];
                            lo <= theta_tau[k] && theta_tau[k] <= hi
                        })
                        .count();
                    hits as f64 / results.len() as f64
                })
                .collect(),
        )
    } else {
        None
    };
    let rmses: Option<Vec<f64>> = results.iter().map(|m| m.rmse_m).collect();
    let mean_rmse_m = match rmses {
        Some(v) => Some(mean(&v)?),
        None => None,
    };
    let mspes: Vec<f64> = results.iter().map(|m| m.mspe).collect();
    Ok(MethodSummary {
        mode,
        bias,
        sd,
        coverage,
        mean_rmse_m,
        mean_mspe: mean(&mspes)?,
    })
}

impl ExperimentReport {
    pub fn method(&self, mode: Mode) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.mode == mode)
    }

    /// `method,metric,value` rows, one per method and metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,metric,value\n");
        for m in &self.methods {
            let mut row = |metric: String, value: f64| {
                let _ = writeln!(out, "{},{},{}", m.mode, metric, value);
            };
            for (k, b) in m.bias.iter().enumerate() {
                row(format!("bias_theta{}", k + 1), *b);
            }
            for (k, s) in m.sd.iter().enumerate() {
                row(format!("sd_theta{}", k + 1), *s);
            }
            if let Some(cov) = &m.coverage {
                for (k, c) in cov.iter().enumerate() {
                    row(format!("coverage_theta{}", k + 1), *c);
                }
            }
            if let Some(r) = m.mean_rmse_m {
                row("rmse_m".into(), r);
            }
            row("mspe".into(), m.mean_mspe);
            row("replicates".into(), self.replicates_used as f64);
        }
        out
    }

    /// Plain-text table: one column per method, bias with SD in parentheses,
    /// then coverage, relative error of `m̂` and prediction error.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "case {} | n = {} | tau = {} | replicates {}/{}",
            self.spec.case,
            self.spec.n,
            self.spec.tau.get(),
            self.replicates_used,
            self.replicates_requested
        );
        let _ = write!(out, "{:<22}", "");
        for m in &self.methods {
            let _ = write!(out, "{:>20}", m.mode.name().to_uppercase());
        }
        out.push('\n');
        let p = self.methods.iter().map(|m| m.bias.len()).max().unwrap_or(0);
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        for k in 0..p {
            let _ = write!(out, "{:<22}", format!("theta{} bias (sd)", k + 1));
            for m in &self.methods {
                let s = match (m.bias.get(k), m.sd.get(k)) {
                    (Some(b), Some(s)) => format!("{b:.4} ({s:.4})"),
                    _ => "-".into(),
                };
                let _ = write!(out, "{s:>20}");
            }
            out.push('\n');
        }
        for k in 0..p {
            let _ = write!(out, "{:<22}", format!("theta{} coverage", k + 1));
            for m in &self.methods {
                let c = m.coverage.as_ref().and_then(|c| c.get(k).copied());
                let _ = write!(out, "{:>20}", cell(c));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<22}", "RMSE(m)");
        for m in &self.methods {
            let _ = write!(out, "{:>20}", cell(m.mean_rmse_m));
        }
        out.push('\n');
        let _ = write!(out, "{:<22}", "MSPE");
        for m in &self.methods {
            let _ = write!(out, "{:>20}", cell(Some(m.mean_mspe)));
        }
        out.push('\n');
        out
    }
}
