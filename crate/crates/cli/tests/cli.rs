use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oer")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = oer(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_fit_sweep_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "example1", "--n", "2000", "--seed", "4", "--out", "data.csv"]);
    let data = fs::read_to_string(d.join("data.csv")).unwrap();
    assert!(data.starts_with("label,score,x1\n"));
    assert_eq!(data.lines().count(), 2001);
    assert_eq!(ok(d, &["synth", "example1", "--n", "2000", "--seed", "4"]), data);

    let table = ok(d, &["fit", "--input", "data.csv", "--bins", "4", "--out", "model.json"]);
    // header plus 4 interior and 2 outer bins
    assert_eq!(table.lines().count(), 7);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["stats"].as_array().unwrap().len(), 6);

    ok(d, &["sweep", "--model-file", "model.json", "--lambda-min", "0.1", "--lambda-max", "10", "--lambda-points", "7"]);
    let thresholds = fs::read_to_string(d.join("thresholds.csv")).unwrap();
    assert!(thresholds.starts_with("lambda,bin,k,converged,pred_fpr,pred_tpr\n"));
    assert_eq!(thresholds.lines().count(), 1 + 7 * 6);

    ok(d, &["sweep", "--input", "data.csv", "--bins", "4", "--gradient", "--lambda-points", "9", "--out", "t2.csv"]);
    assert_eq!(fs::read_to_string(d.join("t2.csv")).unwrap().lines().count(), 1 + 9 * 6);
}

#[test]
fn roc_writes_outputs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "example1", "--n", "3000", "--out", "data.csv"]);
    fs::write(
        d.join("run.toml"),
        "input = \"data.csv\"\noutput_dir = \"results\"\n[partition]\nbins = [4]\n[evaluation]\nfolds = 3\nseed = 1\n",
    )
    .unwrap();
    let out = ok(d, &["roc", "--config", "run.toml", "--folds", "4"]);
    assert!(out.contains("auc_delta"));
    assert!(out.contains("/4 folds"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("results/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["folds"], 4);
    for fold in 0..4 {
        for m in ["oer", "fixed", "constant_fpr", "constant_tpr", "rocch", "oer_raw"] {
            assert!(d.join(format!("results/fold{fold}_{m}.csv")).exists(), "fold{fold}_{m}");
        }
    }
}

#[test]
fn select_reports_features() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "example2", "--n", "4000", "--out", "data.csv"]);
    let out = ok(d, &["select", "--input", "data.csv", "--nbins", "6", "--out", "f.csv"]);
    assert!(out.lines().nth(1).unwrap().starts_with("x1\t"));
    assert!(fs::read_to_string(d.join("f.csv")).unwrap().starts_with("feature,sd_variance,prior_variance,accepted"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let usage = oer(d, &["synth", "example3"]);
    assert_eq!(usage.status.code(), Some(2));
    let missing = oer(d, &["fit", "--input", "nope.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    ok(d, &["synth", "example1", "--n", "200", "--out", "data.csv"]);
    assert_eq!(oer(d, &["select", "--input", "data.csv", "--nbins", "1"]).status.code(), Some(1));
    fs::write(d.join("bad.toml"), "colour = 3\n").unwrap();
    assert_eq!(oer(d, &["roc", "--config", "bad.toml"]).status.code(), Some(1));
    assert!(!d.join("out").exists());
}
