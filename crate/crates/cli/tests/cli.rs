use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sdc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdc"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gen_train_eval_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = sdc(d, &["gen-data", "--clusters", "4", "--per", "250", "--dim", "128", "--seed", "7", "--out", "f.sdcf"]);
    assert_eq!(gen.status.code(), Some(0));
    let train = sdc(d, &["train", "--features", "f.sdcf", "--bits", "16", "--epochs", "5", "--out", "m.sdcm"]);
    assert_eq!(train.status.code(), Some(0), "{}", String::from_utf8_lossy(&train.stderr));
    let eval = sdc(d, &["eval", "--model", "m.sdcm", "--features", "f.sdcf"]);
    assert_eq!(eval.status.code(), Some(0), "{}", String::from_utf8_lossy(&eval.stderr));
    let doc = json(&eval);
    let map = doc["map_at_k"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&map));
    assert_eq!(doc["n_queries"], 1000);
}

#[test]
fn no_arguments_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdc(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdc(dir.path(), &["gen-data", "--bogus", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mismatched_dims_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sdc(d, &["gen-data", "--per", "20", "--dim", "64", "--out", "a.sdcf"]).status.success());
    assert!(sdc(d, &["gen-data", "--per", "20", "--dim", "32", "--out", "b.sdcf"]).status.success());
    assert!(sdc(d, &["baseline", "--method", "lsh", "--features", "a.sdcf", "--bits", "8", "--out", "l.sdcm"]).status.success());
    let out = sdc(d, &["encode", "--model", "l.sdcm", "--features", "b.sdcf", "--out", "c.sdcb"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape mismatch"));
}

#[test]
fn missing_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdc(dir.path(), &["train", "--features", "nope.sdcf", "--out", "m.sdcm"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"epochs": 2, "k_bits": 8, "lr": 0.01, "seed": 4, "points_per_cluster": 20, "dim": 16}"#).unwrap();
    let gen = sdc(d, &["gen-data", "--config", "cfg.json", "--out", "f.sdcf"]);
    assert_eq!(json(&gen)["spec"]["dim"], 16);
    let out = sdc(d, &["train", "--config", "cfg.json", "--features", "f.sdcf", "--bits", "12", "--seed", "5", "--out", "m.sdcm"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = &json(&out)["config"];
    assert_eq!(cfg["k_bits"], 12);
    assert_eq!(cfg["epochs"], 2);
    assert_eq!(cfg["lr"], 0.01);
    assert_eq!(cfg["seed"], 5);
}

#[test]
fn bad_config_value_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"dim": "wide"}"#).unwrap();
    let out = sdc(d, &["gen-data", "--config", "cfg.json", "--out", "f.sdcf"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_and_itq_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sdc(d, &["gen-data", "--per", "50", "--dim", "32", "--out", "f.sdcf"]).status.success());
    let itq = sdc(d, &["baseline", "--method", "itq", "--features", "f.sdcf", "--bits", "8", "--iters", "10", "--out", "i.sdci"]);
    assert_eq!(itq.status.code(), Some(0), "{}", String::from_utf8_lossy(&itq.stderr));
    let an = sdc(d, &["analyze", "--model", "i.sdci", "--features", "f.sdcf", "--n-pos", "500", "--n-neg", "500", "--bins", "20", "--out", "an"]);
    assert_eq!(an.status.code(), Some(0), "{}", String::from_utf8_lossy(&an.stderr));
    let score = json(&an)["report"]["intersection"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&score));
    let hist = std::fs::read_to_string(d.join("an/histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 21);
    assert!(d.join("an/pairs.csv").exists());
}
