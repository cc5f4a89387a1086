//! Command implementations behind the `dplqr` binary.
//!
//! Every command takes a [`RunConfig`]. Values come from an optional JSON
//! config file, overlaid by command-line flags; unset fields fall back to
//! the defaults documented on each field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{covariance, CovarianceEstimate};
use crate::io::{load_csv, read_table, write_json, write_text, ColumnRoles, MinMaxScaling, ModelFile};
use crate::loss::QuantileLevel;
use crate::model::{fit, make_mode_config, predict_all, Dataset, Mode};
use crate::optim::{default_grid, tune, TrainConfig};
use crate::rng::Rng;
use crate::sim::{run_experiment, DgpSpec, ExperimentOptions, ExperimentReport, ScaleReading, Tuning};

/// Flat run configuration. Every field is optional so that a config file
/// and command-line flags can be layered with [`RunConfig::overlay`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Quantile level, default 0.5.
    pub tau: Option<f64>,
    /// Estimator, default `dplqr`.
    pub mode: Option<Mode>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub epochs: Option<usize>,
    pub minibatch: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub learning_rate: Option<f64>,
    /// Learning rates searched when tuning; default `[learning_rate]`.
    pub learning_rates: Option<Vec<f64>>,
    /// Search depth, width and learning rate on a hold-out split before fitting.
    pub tune: Option<bool>,
    /// Default 0.
    pub seed: Option<u64>,
    /// Confidence level of reported intervals, default 0.95.
    pub ci_level: Option<f64>,
    /// Min-max scale the `Z` columns to `[0, 1]`, default true.
    pub scale_z: Option<bool>,

    pub data: Option<PathBuf>,
    pub y: Option<String>,
    pub x: Option<Vec<String>>,
    pub z: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub model: Option<PathBuf>,

    pub case: Option<u8>,
    pub n: Option<usize>,
    /// Default 160.
    pub replicates: Option<usize>,
    /// Default `[lqr, dplqr]`.
    pub methods: Option<Vec<Mode>>,
    /// Default `full-grid`.
    pub tuning: Option<Tuning>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub align_level: Option<bool>,
    /// Read the heteroscedastic `x₁ + x₁` term as `2 x₁`.
    pub literal_x1: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay_fields!(base, top;
            tau, mode, depth, width, epochs, minibatch, early_stop_patience, learning_rate,
            learning_rates, tune, seed, ci_level, scale_z, data, y, x, z, out, report, model,
            case, n, replicates, methods, tuning, out_dir, workers, align_level, literal_x1)
    }

    pub fn tau(&self) -> Result<QuantileLevel> {
        QuantileLevel::new(self.tau.unwrap_or(0.5))
    }

    pub fn ci_level(&self) -> Result<f64> {
        let level = self.ci_level.unwrap_or(0.95);
        if level > 0.0 && level < 1.0 {
            Ok(level)
        } else {
            Err(Error::InvalidArgument(format!("ci_level must lie in (0, 1), got {level}")))
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Training configuration with unset fields taken from `base`.
    pub fn train_config(&self, base: &TrainConfig) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            depth: self.depth.unwrap_or(base.depth),
            width: self.width.unwrap_or(base.width),
            epochs: self.epochs.unwrap_or(base.epochs),
            minibatch: self.minibatch.unwrap_or(base.minibatch),
            early_stop_patience: self.early_stop_patience.unwrap_or(base.early_stop_patience),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            seed: self.seed(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn has_train_overrides(&self) -> bool {
        self.depth.is_some()
            || self.width.is_some()
            || self.epochs.is_some()
            || self.minibatch.is_some()
            || self.early_stop_patience.is_some()
            || self.learning_rate.is_some()
    }

    pub fn roles(&self) -> Result<ColumnRoles> {
        let y = self
            .y
            .clone()
            .ok_or_else(|| Error::InvalidArgument("response column (--y) is required".into()))?;
        let clean = |cols: &Option<Vec<String>>| -> Vec<String> {
            cols.iter()
                .flatten()
                .map(|c| c.trim().to_string())
                .filter(|c| !c.is_empty())
                .collect()
        };
        Ok(ColumnRoles {
            y,
            x: clean(&self.x),
            z: clean(&self.z),
        })
    }

    fn require_path<'a>(field: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Configuration as run, with tuned hyperparameters filled in.
    pub config: RunConfig,
    pub train_config: TrainConfig,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub tau: f64,
    pub mode: Mode,
    pub theta: Vec<f64>,
    pub inference: Option<CovarianceEstimate>,
    pub history: HistorySummary,
    /// Hold-out check loss per candidate when tuning was requested.
    pub tuning: Option<TuneReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best: TrainConfig,
    pub best_index: usize,
    pub candidates: Vec<TrainConfig>,
    pub scores: Vec<Option<f64>>,
}

fn apply_scaling(data: Dataset, scale: bool) -> Result<(Dataset, Option<MinMaxScaling>)> {
    if !scale || data.q() == 0 {
        return Ok((data, None));
    }
    let s = MinMaxScaling::fit(data.z());
    let z = s.apply(data.z())?;
    Ok((Dataset::new(data.y().to_vec(), data.x().clone(), z)?, Some(s)))
}

fn tune_grid(cfg: &RunConfig, base: &TrainConfig, mode: Mode) -> Vec<TrainConfig> {
    let lrs = cfg.learning_rates.clone().unwrap_or_else(|| vec![base.learning_rate]);
    let mut out: Vec<TrainConfig> = Vec::new();
    for c in default_grid(base, &lrs).iter().map(|c| make_mode_config(mode, c)) {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn run_tuning(
    cfg: &RunConfig,
    data: &Dataset,
    tau: QuantileLevel,
    mode: Mode,
    base: &TrainConfig,
    rng: &Rng,
) -> Result<TuneReport> {
    let candidates = tune_grid(cfg, base, mode);
    let res = tune(&candidates, data, tau, mode, rng)?;
    Ok(TuneReport {
        best: res.best,
        best_index: res.best_index,
        candidates,
        scores: res.scores,
    })
}

/// Output of [`cmd_fit`]; both parts are also written to disk when the
/// corresponding paths are configured.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: ModelFile,
    pub report: FitReport,
}

/// Loads data, optionally tunes, fits, estimates the covariance of `θ̂`
/// and writes the model file and report.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutcome> {
    let tau = cfg.tau()?;
    let mode = cfg.mode.unwrap_or(Mode::Dplqr);
    let level = cfg.ci_level()?;
    let roles = cfg.roles()?;
    let path = RunConfig::require_path(&cfg.data, "data")?;
    let raw = load_csv(path, &roles)?;
    let (data, scaling) = apply_scaling(raw, cfg.scale_z.unwrap_or(true))?;

    let master = Rng::new(cfg.seed());
    let base = cfg.train_config(&TrainConfig::default())?;
    let tuning = if cfg.tune.unwrap_or(false) {
        Some(run_tuning(cfg, &data, tau, mode, &base, &master.child(1))?)
    } else {
        None
    };
    let train_cfg = make_mode_config(
        mode,
        tuning.as_ref().map_or(&base, |t| &t.best),
    );
    let fitted = fit(&data, tau, mode, &train_cfg, &mut master.child(2))?;
    let inference = match mode {
        Mode::Dnqr => None,
        Mode::Dplqr | Mode::Lqr if data.p() == 0 => None,
        Mode::Dplqr | Mode::Lqr => {
            Some(covariance(&fitted, &data, &train_cfg, level, &master.child(3))?)
        }
    };

    let mut resolved = cfg.clone();
    resolved.tau = Some(tau.get());
    resolved.mode = Some(mode);
    resolved.ci_level = Some(level);
    resolved.seed = Some(cfg.seed());
    resolved.scale_z = Some(cfg.scale_z.unwrap_or(true));
    resolved.tune = Some(tuning.is_some());
    resolved.depth = Some(train_cfg.depth);
    resolved.width = Some(train_cfg.width);
    resolved.epochs = Some(train_cfg.epochs);
    resolved.minibatch = Some(train_cfg.minibatch);
    resolved.early_stop_patience = Some(train_cfg.early_stop_patience);
    resolved.learning_rate = Some(train_cfg.learning_rate);
    resolved.x = Some(roles.x.clone());
    resolved.z = Some(roles.z.clone());

    let report = FitReport {
        config: resolved,
        train_config: train_cfg.clone(),
        n: data.n(),
        p: data.p(),
        q: data.q(),
        tau: tau.get(),
        mode,
        theta: fitted.theta_hat.clone(),
        inference,
        history: HistorySummary {
            epochs_run: fitted.history.stopped_epoch,
            best_epoch: fitted.history.best_epoch,
            best_val_loss: fitted.history.best_val_loss(),
        },
        tuning,
    };
    let model = ModelFile::from_fit(&fitted, roles, scaling, train_cfg);
    if let Some(out) = &cfg.out {
        write_json(out, &model)?;
    }
    if let Some(rp) = &cfg.report {
        write_json(rp, &report)?;
    }
    Ok(FitOutcome { model, report })
}

/// Predictions for every row of `data_path`, written as a one-column CSV
/// with header `y_hat`. The response column is not needed.
pub fn cmd_predict(model_path: &Path, data_path: &Path, out: Option<&Path>) -> Result<Vec<f64>> {
    let model = ModelFile::read(model_path)?;
    let fitted = model.to_fit()?;
    let table = read_table(data_path)?;
    let x = table.numeric_columns(&model.roles.x, data_path)?;
    let mut z = table.numeric_columns(&model.roles.z, data_path)?;
    if let Some(s) = &model.scaling {
        z = s.apply(&z)?;
    }
    let y_hat = if table.rows.is_empty() {
        Vec::new()
    } else {
        let data = Dataset::new(vec![0.0; table.rows.len()], x, z)?;
        predict_all(&fitted, &data)?
    };
    if let Some(out) = out {
        let mut text = String::from("y_hat\n");
        for v in &y_hat {
            text.push_str(&format!("{v}\n"));
        }
        write_text(out, &text)?;
    }
    Ok(y_hat)
}

/// Runs a simulation experiment. With an output directory, writes
/// `summary.csv`, `summary.txt` and the full `report.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<ExperimentReport> {
    let case = cfg
        .case
        .ok_or_else(|| Error::InvalidArgument("--case is required".into()))?;
    let n = cfg
        .n
        .ok_or_else(|| Error::InvalidArgument("--n is required".into()))?;
    let mut spec = DgpSpec::new(case, n, cfg.tau()?)?;
    if cfg.literal_x1.unwrap_or(false) {
        spec.scale_reading = ScaleReading::DoubleFirst;
    }
    let base_config = if cfg.has_train_overrides() {
        let (preset, _) = TrainConfig::for_design(case, n)?;
        Some(cfg.train_config(&preset)?)
    } else {
        None
    };
    let opts = ExperimentOptions {
        methods: cfg.methods.clone().unwrap_or_else(|| vec![Mode::Lqr, Mode::Dplqr]),
        tuning: cfg.tuning.unwrap_or(Tuning::FullGrid),
        ci_level: cfg.ci_level()?,
        align_level: cfg.align_level.unwrap_or(false),
        workers: cfg.workers.unwrap_or(0),
        base_config,
    };
    let report = run_experiment(&spec, cfg.replicates.unwrap_or(160), &opts, cfg.seed())?;
    if let Some(dir) = &cfg.out_dir {
        write_text(&dir.join("summary.csv"), &report.to_csv())?;
        write_text(&dir.join("summary.txt"), &report.to_table())?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}

/// Hold-out search over depth, width and learning rate on a dataset.
pub fn cmd_tune(cfg: &RunConfig) -> Result<TuneReport> {
    let tau = cfg.tau()?;
    let mode = cfg.mode.unwrap_or(Mode::Dplqr);
    let roles = cfg.roles()?;
    let path = RunConfig::require_path(&cfg.data, "data")?;
    let (data, _) = apply_scaling(load_csv(path, &roles)?, cfg.scale_z.unwrap_or(true))?;
    let base = cfg.train_config(&TrainConfig::default())?;
    let report = run_tuning(cfg, &data, tau, mode, &base, &Rng::new(cfg.seed()).child(1))?;
    if let Some(out) = &cfg.out {
        write_json(out, &report)?;
    }
    Ok(report)
}
