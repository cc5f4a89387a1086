mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dplqr::cli::{cmd_fit, cmd_predict, cmd_simulate, cmd_tune, RunConfig};
use dplqr::io::load_csv;
use dplqr::model::{predict_all, Dataset, Mode};
use dplqr::rng::Rng;
use dplqr::sim::Tuning;
use dplqr::QuantileLevel;

use common::{exact_lqr_min, t3_reference_draw};

fn write_data(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = Rng::new(seed);
    let mut text = String::from("y,x1,z1,z2\n");
    for _ in 0..n {
        let x1 = if rng.uniform01() < 0.5 { 1.0 } else { 0.0 };
        let z1 = 10.0 * rng.uniform01();
        let z2 = rng.std_normal();
        let y = 1.5 * x1 + (z1 / 3.0).sin() + 0.5 * z2 + 0.3 * t3_reference_draw(&mut rng);
        text.push_str(&format!("{y},{x1},{z1},{z2}\n"));
    }
    let p = dir.join("data.csv");
    fs::write(&p, text).unwrap();
    p
}

fn fit_config(dir: &Path, data: &Path) -> RunConfig {
    RunConfig {
        data: Some(data.to_path_buf()),
        y: Some("y".into()),
        x: Some(vec!["x1".into()]),
        z: Some(vec!["z1".into(), "z2".into()]),
        seed: Some(9),
        epochs: Some(80),
        width: Some(12),
        out: Some(dir.join("model.json")),
        report: Some(dir.join("report.json")),
        ..RunConfig::default()
    }
}

#[test]
fn fit_then_predict_reproduces_in_sample_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 300, 1);
    let cfg = fit_config(dir.path(), &data);
    let out = cmd_fit(&cfg).unwrap();

    let preds_path = dir.path().join("preds.csv");
    let preds = cmd_predict(&dir.path().join("model.json"), &data, Some(&preds_path)).unwrap();

    let raw = load_csv(&data, &out.model.roles).unwrap();
    let scaled_z = out.model.scaling.as_ref().unwrap().apply(raw.z()).unwrap();
    let scaled = Dataset::new(raw.y().to_vec(), raw.x().clone(), scaled_z).unwrap();
    let in_sample = predict_all(&out.model.to_fit().unwrap(), &scaled).unwrap();
    assert_eq!(preds, in_sample);

    let text = fs::read_to_string(&preds_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y_hat"));
    let parsed: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(parsed, preds);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["tau"], 0.5);
    assert_eq!(report["config"]["depth"], 2);
    assert_eq!(report["n"], 300);
    assert_eq!(report["inference"]["intervals"].as_array().unwrap().len(), 1);
}

#[test]
fn fit_is_byte_identical_under_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 200, 2);
    let mut cfg = fit_config(dir.path(), &data);
    cfg.tune = Some(true);
    cfg.epochs = Some(20);
    cfg.learning_rates = Some(vec![0.01, 0.02]);
    cmd_fit(&cfg).unwrap();
    let model_a = fs::read(dir.path().join("model.json")).unwrap();
    let report_a = fs::read(dir.path().join("report.json")).unwrap();
    cmd_fit(&cfg).unwrap();
    assert_eq!(fs::read(dir.path().join("model.json")).unwrap(), model_a);
    assert_eq!(fs::read(dir.path().join("report.json")).unwrap(), report_a);

    let report: serde_json::Value = serde_json::from_slice(&report_a).unwrap();
    assert_eq!(report["tuning"]["candidates"].as_array().unwrap().len(), 16);
    assert_eq!(report["config"]["tune"], true);
}

#[test]
fn lqr_cli_slope_matches_exact_median_regression() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(4);
    let n = 500;
    let mut text = String::from("y,x\n");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let x = 4.0 * rng.uniform01() - 2.0;
        let y = 0.5 + x + t3_reference_draw(&mut rng);
        text.push_str(&format!("{y},{x}\n"));
        xs.push(x);
        ys.push(y);
    }
    let data = dir.path().join("lin.csv");
    fs::write(&data, text).unwrap();
    let cfg = RunConfig {
        data: Some(data),
        y: Some("y".into()),
        x: Some(vec!["x".into()]),
        mode: Some(Mode::Lqr),
        seed: Some(1),
        ..RunConfig::default()
    };
    let out = cmd_fit(&cfg).unwrap();
    let (_, _, b_exact) = exact_lqr_min(&xs, &ys, QuantileLevel::MEDIAN);
    let b = out.report.theta[0];
    assert!((b - b_exact).abs() < 0.15, "slope {b} vs exact {b_exact}");
    assert_eq!(out.model.widths, vec![0, 1]);
}

#[test]
fn predict_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 150, 3);
    let mut cfg = fit_config(dir.path(), &data);
    cfg.epochs = Some(5);
    cmd_fit(&cfg).unwrap();
    let model = dir.path().join("model.json");

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x1,z1,z2\n").unwrap();
    let out = dir.path().join("empty_preds.csv");
    assert!(cmd_predict(&model, &empty, Some(&out)).unwrap().is_empty());
    assert_eq!(fs::read_to_string(&out).unwrap(), "y_hat\n");

    let wrong = dir.path().join("wrong.csv");
    fs::write(&wrong, "x1,z1,zz\n1,2,3\n").unwrap();
    let err = cmd_predict(&model, &wrong, None).unwrap_err();
    assert!(err.to_string().contains("z2"), "{err}");
    assert_eq!(err.category(), "data");
}

#[test]
fn simulate_smoke_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        case: Some(2),
        n: Some(200),
        replicates: Some(1),
        methods: Some(vec![Mode::Lqr, Mode::Dplqr]),
        tuning: Some(Tuning::Fixed),
        epochs: Some(30),
        seed: Some(5),
        out_dir: Some(dir.path().join("sim")),
        ..RunConfig::default()
    };
    let report = cmd_simulate(&cfg).unwrap();
    assert_eq!(report.replicates_used, 1);
    let csv = fs::read_to_string(dir.path().join("sim/summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,metric,value"));
    let metrics: Vec<String> = lines
        .filter(|l| l.starts_with("dplqr,"))
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(
        metrics,
        [
            "bias_theta1", "bias_theta2", "sd_theta1", "sd_theta2", "coverage_theta1",
            "coverage_theta2", "rmse_m", "mspe", "replicates"
        ]
    );
    assert!(dir.path().join("sim/summary.txt").exists());
    let first = fs::read(dir.path().join("sim/report.json")).unwrap();
    cmd_simulate(&cfg).unwrap();
    assert_eq!(fs::read(dir.path().join("sim/report.json")).unwrap(), first);
}

#[test]
fn tune_reports_best_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 200, 6);
    let mut cfg = fit_config(dir.path(), &data);
    cfg.epochs = Some(10);
    cfg.out = Some(dir.path().join("tune.json"));
    let rep = cmd_tune(&cfg).unwrap();
    assert_eq!(rep.candidates.len(), 8);
    assert_eq!(rep.best, rep.candidates[rep.best_index]);
    let finite: Vec<f64> = rep.scores.iter().flatten().copied().collect();
    let best = rep.scores[rep.best_index].unwrap();
    assert!(finite.iter().all(|s| *s >= best));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dplqr"))
}

#[test]
fn binary_end_to_end_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 200, 7);
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"tau": 0.25, "epochs": 15, "width": 8, "y": "y"}"#).unwrap();
    let model = dir.path().join("m.json");
    let status = bin()
        .args(["fit", "--config"])
        .arg(&config)
        .arg("--data")
        .arg(&data)
        .args(["--x", "x1", "--z", "z1,z2", "--tau", "0.75", "--seed", "3", "--out"])
        .arg(&model)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["tau"], 0.75);
    assert_eq!(saved["config"]["width"], 8);
    assert_eq!(saved["schema_version"], 1);

    let out = bin().arg("predict").arg("--model").arg(&model).arg("--data").arg(&data).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 201);
}

#[test]
fn binary_errors_are_single_line_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["fit", "--y", "y", "--data"])
        .arg(dir.path().join("missing.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error[io]: "), "{stderr}");

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x\n1,2\n3,abc\n").unwrap();
    let out = bin().args(["fit", "--y", "y", "--x", "x", "--data"]).arg(&bad).output().unwrap();
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error[data]: ") && stderr.contains("row 2"), "{stderr}");
    assert_eq!(out.status.code(), Some(4));

    let out = bin().args(["simulate", "--case", "9", "--n", "100"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
