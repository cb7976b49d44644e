//! The command-line tool end to end on a tiny phantom cohort.

use std::path::Path;
use std::process::{Command, Output};

use atlasmass::pipeline::{RunConfig, FIT_CONFIG};
use atlasmass::regress::{CVProtocol, RegressorKind};
use atlasmass::selection::AnnealingSchedule;

fn atlasmass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlasmass")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn phantom_fit_predict_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let cohort = tmp.path().join("cohort");
    let o = atlasmass(&["phantom", "--subjects", "8", "--atlases", "1", "--seed", "3", "--small", "--out", s(&cohort)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(cohort.join("weights.csv").is_file());

    let config_path = cohort.join(FIT_CONFIG);
    let mut config = RunConfig::load(&config_path).unwrap();
    assert_eq!(config.subjects.len(), 8);
    config.kinds = vec![RegressorKind::Linear, RegressorKind::Ridge];
    config.cv = CVProtocol { folds: 3, repeats: 2, seed: 0 };
    config.annealing = AnnealingSchedule { n_iterations: 40, early_stop_window: 40, ..Default::default() };
    config.registration.levels = 1;
    config.registration.max_iterations_per_level = 20;
    // Paths were resolved on load; save them as absolute paths.
    config.save(&config_path).unwrap();

    let fit_dir = tmp.path().join("fit");
    let o = atlasmass(&["fit", "--config", s(&config_path), "--out", s(&fit_dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(fit_dir.join("results_table.txt")).unwrap();
    for row in ["atlas1", "mean", "multi"] {
        assert!(table.contains(row), "{table}");
    }
    let features = std::fs::read_to_string(fit_dir.join("features.csv")).unwrap();
    assert_eq!(features.lines().count(), 9);
    let model = fit_dir.join("model.json");
    assert!(model.is_file());
    assert!(fit_dir.join("models/linear.json").is_file());

    let subjects = cohort.join("subjects");
    let preds = tmp.path().join("pred.csv");
    let v1 = subjects.join("subject_001.nii");
    let v2 = subjects.join("subject_002.nii");
    let o = atlasmass(&["predict", "--model", s(&model), "--out", s(&preds), s(&v1), s(&v2)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&preds).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,predicted_weight_g");
    assert!(lines[1].starts_with("subject_001,"));
    assert!(lines[2].starts_with("subject_002,"));
    let value: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(value.is_finite() && value > 0.0);

    // No volumes: header only.
    let o = atlasmass(&["predict", "--model", s(&model)]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "id,predicted_weight_g\n");

    // A model whose atlas files vanished is a data error.
    let bundle = std::fs::read_to_string(&model).unwrap();
    let broken = tmp.path().join("broken.json");
    std::fs::write(&broken, bundle.replace("atlas_01.nii", "atlas_99.nii")).unwrap();
    let o = atlasmass(&["predict", "--model", s(&broken), s(&v1)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("atlas_99"));
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn evaluate_metrics_and_comparisons() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = tmp.path().join("truth.csv");
    write(&truth, "id,dissected_weight_g\na,10\nb,20\nc,30\n");

    let perfect = tmp.path().join("perfect.csv");
    write(&perfect, "id,predicted_weight_g\nc,30\na,10\nb,20\n");
    let o = atlasmass(&["evaluate", "--predictions", s(&perfect), "--truth", s(&truth)]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("r2=1.0000") && out.contains("rmse_g=0.0000"), "{out}");

    let constant = tmp.path().join("constant.csv");
    write(&constant, "id,predicted_weight_g\na,20\nb,20\nc,20\n");
    let o = atlasmass(&["evaluate", "--predictions", s(&constant), "--truth", s(&truth)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("r2=0.0000"));

    // Residuals 1, -2, 2: SSres 9, SStot 200, RMSE sqrt(3).
    let hand = tmp.path().join("hand.csv");
    write(&hand, "id,predicted_weight_g\na,11\nb,18\nc,32\n");
    let report = tmp.path().join("report");
    let o = atlasmass(&[
        "evaluate", "--predictions", s(&hand), "--truth", s(&truth), "--compare", s(&constant), "--out", s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.join("metrics.json")).unwrap()).unwrap();
    assert!((m["r2"].as_f64().unwrap() - (1.0 - 9.0 / 200.0)).abs() < 1e-12);
    assert!((m["rmse_g"].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(m["mean_target_g"].as_f64().unwrap(), 20.0);
    let residuals = std::fs::read_to_string(report.join("residuals.csv")).unwrap();
    assert_eq!(residuals.lines().nth(2).unwrap(), "b,20,18,-2");
    assert!(report.join("comparisons.csv").is_file());

    let mismatch = tmp.path().join("mismatch.csv");
    write(&mismatch, "id,predicted_weight_g\na,10\nb,20\nz,30\n");
    let o = atlasmass(&["evaluate", "--predictions", s(&mismatch), "--truth", s(&truth)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    assert_eq!(code(&atlasmass(&[])), 1);
    assert_eq!(code(&atlasmass(&["frobnicate"])), 1);
    assert_eq!(code(&atlasmass(&["phantom", "--out", "x"])), 1);
    assert_eq!(code(&atlasmass(&["--help"])), 0);

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    assert_eq!(code(&atlasmass(&["fit", "--config", s(&missing)])), 2);
    let bad = tmp.path().join("bad.json");
    write(&bad, "{ not json");
    assert_eq!(code(&atlasmass(&["fit", "--config", s(&bad)])), 2);
    let o = atlasmass(&["phantom", "--subjects", "1", "--atlases", "1", "--seed", "0", "--small", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
}
