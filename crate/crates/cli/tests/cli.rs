use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridcast_core::config::RunConfig;
use gridcast_core::eval::cross_validate_detailed;
use gridcast_core::io::load_dataset;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_gridcast");

/// A small toy5 run: eight days of the stressed benchmark.
const SMALL: &[&str] = &["--case", "toy5", "--days", "8", "--seed", "7"];

fn gridcast(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn ok_summary(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout.clone()).unwrap();
    assert_eq!(stdout.lines().count(), 1, "one summary line expected: {stdout}");
    serde_json::from_str(stdout.trim()).unwrap()
}

fn error_of(o: &Output) -> Value {
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr.clone()).unwrap();
    let last = stderr.lines().last().expect("error line");
    serde_json::from_str(last).unwrap()
}

fn output(summary: &Value, suffix: &str) -> PathBuf {
    summary["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| PathBuf::from(p.as_str().unwrap()))
        .find(|p| p.to_string_lossy().ends_with(suffix))
        .unwrap_or_else(|| panic!("no output ending in {suffix}"))
}

fn make_dataset(out: &Path, extra: &[&str]) -> PathBuf {
    let args: Vec<&str> = ["dataset"].iter().chain(SMALL).chain(extra).copied().collect();
    output(&ok_summary(&gridcast(out, &args)), ".csv")
}

#[test]
fn evaluate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_dataset(dir.path(), &[]);
    let ds_arg = ds.to_str().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let args: Vec<&str> = ["evaluate", "--dataset", ds_arg].iter().chain(SMALL).copied().collect();
        let s = ok_summary(&gridcast(&out, &args));
        let json = output(&s, ".json");
        assert!(json.file_name().unwrap().to_string_lossy().starts_with("evaluate-"));
        reports.push((std::fs::read(&json).unwrap(), std::fs::read(output(&s, ".csv")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0].0).unwrap();
    assert_eq!(v["report"]["folds"], 3);
    assert_eq!(v["report"]["fused"]["fold_mze"].as_array().unwrap().len(), 3);
}

#[test]
fn oversized_horizon_gives_empty_dataset_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<&str> = ["dataset", "--horizon", "200"].iter().chain(SMALL).copied().collect();
    let s = ok_summary(&gridcast(dir.path(), &args));
    assert_eq!(s["warning"], true);
    assert_eq!(s["result"]["samples"], 0);
    let csv = output(&s, ".csv");
    let ds = load_dataset(&csv).unwrap();
    assert!(ds.is_empty());
}

#[test]
fn holdout_bundle_reproduces_cross_validation() {
    let dir = tempfile::tempdir().unwrap();
    let ds_path = make_dataset(dir.path(), &[]);
    let ds = load_dataset(&ds_path).unwrap();
    let mut cfg = RunConfig::default();
    cfg.seed = 7;
    let cv = cross_validate_detailed(&ds, &cfg.pipeline, cfg.evaluation.folds, cfg.seed).unwrap();
    for fold in 0..cfg.evaluation.folds {
        let fold_s = fold.to_string();
        let args: Vec<&str> = ["train", "--dataset", ds_path.to_str().unwrap(), "--holdout-fold", &fold_s]
            .iter()
            .chain(SMALL)
            .copied()
            .collect();
        let bundle = output(&ok_summary(&gridcast(dir.path(), &args)), "")
            .to_string_lossy()
            .into_owned();
        let args: Vec<&str> = ["forecast", "--bundle", &bundle, "--windows", ds_path.to_str().unwrap()]
            .iter()
            .chain(SMALL)
            .copied()
            .collect();
        let s = ok_summary(&gridcast(dir.path(), &args));
        let fc: Value = serde_json::from_slice(&std::fs::read(output(&s, ".json")).unwrap()).unwrap();
        let windows = fc["windows"].as_array().unwrap();
        assert_eq!(windows.len(), ds.len());
        let mut checked = 0;
        for p in cv.predictions.iter().filter(|p| p.fold == fold) {
            let w = &windows[p.index];
            assert_eq!(w["fused_class"].as_u64().unwrap() as usize, p.fused, "window {}", p.index);
            let votes: Vec<usize> = w["votes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
            assert_eq!(votes, p.votes);
            assert_eq!(w["confidence"].as_f64().unwrap(), p.confidence);
            checked += 1;
        }
        assert!(checked > 0);
    }
}

#[test]
fn quiet_windows_forecast_normal_with_high_confidence() {
    let dir = tempfile::tempdir().unwrap();
    let stressed = make_dataset(&dir.path().join("stressed"), &[]);
    let quiet = make_dataset(&dir.path().join("quiet"), &["--stress-fraction", "0"]);
    let args: Vec<&str> = ["train", "--dataset", stressed.to_str().unwrap()].iter().chain(SMALL).copied().collect();
    let bundle = output(&ok_summary(&gridcast(dir.path(), &args)), "").to_string_lossy().into_owned();
    let args: Vec<&str> = ["forecast", "--bundle", &bundle, "--windows", quiet.to_str().unwrap()]
        .iter()
        .chain(SMALL)
        .copied()
        .collect();
    let s = ok_summary(&gridcast(dir.path(), &args));
    let fc: Value = serde_json::from_slice(&std::fs::read(output(&s, ".json")).unwrap()).unwrap();
    let windows = fc["windows"].as_array().unwrap();
    assert!(!windows.is_empty());
    let normal = windows.iter().filter(|w| w["label"] == "10000").count();
    assert_eq!(normal, windows.len(), "{normal} of {} normal", windows.len());
    let e = fc["E"].as_f64().unwrap();
    assert!(e >= 0.95, "mean confidence {e}");
}

#[test]
fn layout_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let a = make_dataset(&dir.path().join("a"), &[]);
    let b = make_dataset(&dir.path().join("b"), &["--window", "120"]);
    let args: Vec<&str> = ["train", "--dataset", a.to_str().unwrap()].iter().chain(SMALL).copied().collect();
    let bundle = output(&ok_summary(&gridcast(dir.path(), &args)), "").to_string_lossy().into_owned();
    let args: Vec<&str> = ["forecast", "--bundle", &bundle, "--windows", b.to_str().unwrap()]
        .iter()
        .chain(SMALL)
        .copied()
        .collect();
    let o = gridcast(dir.path(), &args);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_of(&o)["error"], "fingerprint_mismatch");
}

#[test]
fn missing_and_malformed_inputs_are_structured_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridcast(dir.path(), &["evaluate", "--dataset", "/nonexistent/d.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_of(&o)["error"], "io");

    let ds = make_dataset(dir.path(), &[]);
    let args: Vec<&str> = ["train", "--dataset", ds.to_str().unwrap()].iter().chain(SMALL).copied().collect();
    let bundle = output(&ok_summary(&gridcast(dir.path(), &args)), "");
    let manifest = bundle.join("manifest.json");
    let mut m: Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    m["surprise"] = Value::Bool(true);
    std::fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let o = gridcast(
        dir.path(),
        &["forecast", "--bundle", bundle.to_str().unwrap(), "--windows", ds.to_str().unwrap()],
    );
    assert_eq!(error_of(&o)["error"], "schema");

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "colour": "blue"}"#).unwrap();
    let o = gridcast(dir.path(), &["--config", cfg.to_str().unwrap(), "sweep"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_of(&o)["error"], "schema");

    let o = gridcast(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["error"], "usage");
}

#[test]
fn commands_leave_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_dataset(dir.path(), &[]);
    let side = ds.with_extension("json");
    let before = (std::fs::read(&ds).unwrap(), std::fs::read(&side).unwrap());
    let args: Vec<&str> = ["evaluate", "--dataset", ds.to_str().unwrap()].iter().chain(SMALL).copied().collect();
    ok_summary(&gridcast(dir.path(), &args));
    assert_eq!(before, (std::fs::read(&ds).unwrap(), std::fs::read(&side).unwrap()));
}
