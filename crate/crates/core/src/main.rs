use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dplqr::cli::{cmd_fit, cmd_predict, cmd_simulate, cmd_tune, RunConfig};
use dplqr::model::Mode;
use dplqr::sim::Tuning;
use dplqr::Result;

#[derive(Parser)]
#[command(name = "dplqr", version, about = "Deep partially linear quantile regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV file and write the model and a report.
    Fit(DataArgs),
    /// Choose depth, width and learning rate on a hold-out split.
    Tune(DataArgs),
    /// Predict the conditional quantile for every row of a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replicated simulation study.
    Simulate(SimArgs),
}

#[derive(Args, Default)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    ci_level: Option<f64>,
}

#[derive(Args)]
struct DataArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    y: Option<String>,
    /// Comma-separated linear covariate columns.
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<String>>,
    /// Comma-separated nonparametric covariate columns.
    #[arg(long, value_delimiter = ',')]
    z: Option<Vec<String>>,
    /// dplqr, lqr or dnqr.
    #[arg(long)]
    mode: Option<Mode>,
    /// Tune over depth {2,3} x width {10,16,20,32} x learning rates before fitting.
    #[arg(long)]
    tune: bool,
    /// Comma-separated learning rates for tuning.
    #[arg(long, value_delimiter = ',')]
    learning_rates: Option<Vec<f64>>,
    /// Leave the Z columns unscaled.
    #[arg(long)]
    no_scale: bool,
    /// Model file (fit) or tuning result (tune).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    case: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated: lqr, dplqr, dnqr.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Mode>>,
    /// full-grid, learning-rates or fixed.
    #[arg(long, value_parser = parse_tuning)]
    tuning: Option<Tuning>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Shift m-hat by its mean discrepancy before scoring.
    #[arg(long)]
    align_level: bool,
    /// Read the x1 + x1 scale term as 2 x1.
    #[arg(long)]
    literal_x1: bool,
}

fn parse_tuning(s: &str) -> std::result::Result<Tuning, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown tuning '{s}' (full-grid, learning-rates, fixed)"))
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

fn layered(common: &Common, flags: RunConfig) -> Result<RunConfig> {
    let base = match &common.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        tau: common.tau,
        seed: common.seed,
        depth: common.depth,
        width: common.width,
        epochs: common.epochs,
        minibatch: common.minibatch,
        early_stop_patience: common.patience,
        learning_rate: common.learning_rate,
        ci_level: common.ci_level,
        ..flags
    };
    Ok(base.overlay(flags))
}

fn data_config(a: DataArgs) -> Result<RunConfig> {
    let flags = RunConfig {
        data: a.data,
        y: a.y,
        x: a.x,
        z: a.z,
        mode: a.mode,
        tune: flag(a.tune),
        learning_rates: a.learning_rates,
        scale_z: a.no_scale.then_some(false),
        out: a.out,
        report: a.report,
        ..RunConfig::default()
    };
    layered(&a.common, flags)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            let out = cmd_fit(&data_config(a)?)?;
            println!("theta = {:?}", out.report.theta);
            if let Some(inf) = &out.report.inference {
                for (k, (lo, hi)) in inf.intervals.iter().enumerate() {
                    println!("theta{} {:.0}% CI: [{lo:.6}, {hi:.6}]", k + 1, inf.level * 100.0);
                }
            }
        }
        Command::Tune(a) => {
            let rep = cmd_tune(&data_config(a)?)?;
            println!("{}", serde_json::to_string_pretty(&rep.best)?);
        }
        Command::Predict { model, data, out } => {
            let y_hat = cmd_predict(&model, &data, out.as_deref())?;
            if out.is_none() {
                println!("y_hat");
                for v in y_hat {
                    println!("{v}");
                }
            }
        }
        Command::Simulate(a) => {
            let flags = RunConfig {
                case: a.case,
                n: a.n,
                replicates: a.replicates,
                methods: a.methods,
                tuning: a.tuning,
                out_dir: a.out_dir,
                workers: a.workers,
                align_level: flag(a.align_level),
                literal_x1: flag(a.literal_x1),
                ..RunConfig::default()
            };
            let report = cmd_simulate(&layered(&a.common, flags)?)?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
