//! End-to-end tests of the `gcnlab` binary: the generate/train/diagnose
//! pipeline, config overrides, sweep grids, and exit-code conventions.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gcnlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawning gcnlab")
}

fn assert_code(out: &Output, want: i32, context: &str) {
    let got = out.status.code().expect("process terminated by signal");
    assert_eq!(
        got,
        want,
        "{context}: expected exit code {want}, got {got}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Generate a small two-block SBM bundle with an embedded split.
fn gen_bundle(dir: &Path) -> PathBuf {
    let bundle = dir.join("bundle");
    let out = bin()
        .args([
            "gen-sbm",
            "--blocks",
            "2",
            "--nodes-per-block",
            "40",
            "--p-in",
            "0.2",
            "--p-out",
            "0.02",
            "--feature-noise",
            "0.4",
            "--seed",
            "1",
            "--train-per-class",
            "10",
            "--val-size",
            "20",
            "--test-size",
            "40",
            "--out",
        ])
        .arg(&bundle)
        .output()
        .expect("spawning gcnlab");
    assert_code(&out, 0, "gen-sbm");
    bundle
}

fn train_config(bundle: &Path, depth: usize) -> Value {
    serde_json::json!({
        "data": { "bundle": { "path": bundle } },
        "split": { "kind": { "fixed": { "file": null } } },
        "model": {
            "variant": "gcn",
            "depth": depth,
            "hidden_dim": 16,
            "norm": { "node_norm": { "p": 1 } },
            "residual": true,
            "dropout_rate": 0.2
        },
        "optim": { "lr": 0.01, "weight_decay": 0.0005, "l1_weight": 0.0001, "epochs": 30 },
        "seed": 7,
        "diagnostics": {
            "variance_profile": true,
            "record_test_outcomes": true
        }
    })
}

#[test]
fn pipeline_generate_train_diagnose() {
    let tmp = tempfile::TempDir::new().unwrap();
    let bundle = gen_bundle(tmp.path());
    for name in ["meta.json", "edges.tsv", "features.csv", "labels.txt", "splits.json"] {
        assert!(bundle.join(name).is_file(), "bundle is missing {name}");
    }

    // Deep model.
    let deep_cfg = tmp.path().join("deep.json");
    std::fs::write(&deep_cfg, train_config(&bundle, 8).to_string()).unwrap();
    let deep_out = tmp.path().join("deep");
    let out = bin()
        .args(["train", "--config"])
        .arg(&deep_cfg)
        .arg("--out")
        .arg(&deep_out)
        .output()
        .unwrap();
    assert_code(&out, 0, "train deep");
    for name in ["results.csv", "aggregate.csv", "manifest.json", "model.ckpt"] {
        assert!(deep_out.join(name).is_file(), "train output is missing {name}");
    }
    let records: Vec<_> = std::fs::read_dir(deep_out.join("records"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(records.len(), 1);
    let figures: Vec<_> = std::fs::read_dir(deep_out.join("figures"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert!(!figures.is_empty(), "expected at least one figure");

    // Shallow model for the comparison bins.
    let shallow_cfg = tmp.path().join("shallow.json");
    std::fs::write(&shallow_cfg, train_config(&bundle, 2).to_string()).unwrap();
    let shallow_out = tmp.path().join("shallow");
    let out = bin()
        .args(["train", "--config"])
        .arg(&shallow_cfg)
        .arg("--out")
        .arg(&shallow_out)
        .output()
        .unwrap();
    assert_code(&out, 0, "train shallow");

    // Diagnose the deep checkpoint against the shallow one.
    let diag_out = tmp.path().join("diag");
    let out = bin()
        .args(["diagnose", "--checkpoint"])
        .arg(deep_out.join("model.ckpt"))
        .arg("--shallow-checkpoint")
        .arg(shallow_out.join("model.ckpt"))
        .arg("--dataset")
        .arg(&bundle)
        .arg("--out")
        .arg(&diag_out)
        .output()
        .unwrap();
    assert_code(&out, 0, "diagnose");
    let diag: Value =
        serde_json::from_str(&std::fs::read_to_string(diag_out.join("diagnostics.json")).unwrap())
            .unwrap();
    let profile = diag["variance_profile"]["per_layer"].as_array().unwrap();
    assert_eq!(profile.len(), 8, "one variance row per layer");
    assert!(diag["lipschitz"]["value"].as_f64().unwrap() > 0.0);
    let bins = diag["bins"]["gap"].as_array().unwrap();
    assert_eq!(bins.len(), 5, "five variance bins");
    assert!(diag_out.join("variance_profile.svg").is_file());
    assert!(diag_out.join("bin_gaps.svg").is_file());
}

#[test]
fn set_overrides_change_the_effective_config() {
    let tmp = tempfile::TempDir::new().unwrap();
    let bundle = gen_bundle(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, train_config(&bundle, 4).to_string()).unwrap();
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .args([
            "--set",
            "optim.epochs=3",
            "--set",
            "model.dropout_rate=0.0",
            "--set",
            r#"model.norm={"layer_norm_star":null}"#,
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_code(&out, 0, "train with overrides");
    let record_path = std::fs::read_dir(out_dir.join("records"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let record: Value =
        serde_json::from_str(&std::fs::read_to_string(&record_path).unwrap()).unwrap();
    assert_eq!(record["config"]["optim"]["epochs"], 3);
    assert_eq!(record["config"]["model"]["dropout_rate"], 0.0);
    assert_eq!(record["config"]["model"]["norm"], serde_json::json!("layer_norm_star"));
    assert_eq!(record["history"]["train_loss"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_produces_the_full_grid() {
    let tmp = tempfile::TempDir::new().unwrap();
    let bundle = gen_bundle(tmp.path());
    let mut cfg_json = train_config(&bundle, 4);
    cfg_json["optim"]["epochs"] = serde_json::json!(5);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, cfg_json.to_string()).unwrap();
    let out_dir = tmp.path().join("sweep");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args([
            "--depths",
            "2,4",
            "--seeds",
            "0..1",
            "--variants",
            "gcn,nodenorm1",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_code(&out, 0, "sweep");

    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 2, "header + one row per grid cell");
    assert!(lines[0].starts_with("dataset,variant,norm,"));

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["runs"], 8);
    assert_eq!(manifest["failures"].as_array().unwrap().len(), 0);
    assert_eq!(manifest["records"].as_array().unwrap().len(), 8);

    // Aggregates: one row per (variant, norm, depth) group, 2 seeds each.
    let aggregate = std::fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 1 + 4);
    for line in aggregate.lines().skip(1) {
        let runs_field: usize = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(runs_field, 2);
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_code(&run(&["--help"]), 0, "--help");
    assert_code(&run(&["--version"]), 0, "--version");
    assert_code(&run(&["train", "--help"]), 0, "train --help");
}

#[test]
fn usage_and_config_errors_exit_one() {
    // Unknown subcommand / flag / missing required args are usage errors.
    assert_code(&run(&["frobnicate"]), 1, "unknown subcommand");
    assert_code(&run(&["train", "--bogus"]), 1, "unknown flag");
    assert_code(&run(&["train"]), 1, "missing required args");

    let tmp = tempfile::TempDir::new().unwrap();

    // Malformed JSON is a config error.
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_code(&out, 1, "malformed config");

    // Validation failures (negative learning rate) are config errors too.
    let bundle = gen_bundle(tmp.path());
    let mut cfg_json = train_config(&bundle, 4);
    cfg_json["optim"]["lr"] = serde_json::json!(-0.5);
    let bad_lr = tmp.path().join("bad_lr.json");
    std::fs::write(&bad_lr, cfg_json.to_string()).unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&bad_lr)
        .arg("--out")
        .arg(tmp.path().join("out2"))
        .output()
        .unwrap();
    assert_code(&out, 1, "negative learning rate");

    // Impossible SBM probabilities are config errors.
    let out = bin()
        .args([
            "gen-sbm",
            "--blocks",
            "2",
            "--nodes-per-block",
            "10",
            "--p-in",
            "0.1",
            "--p-out",
            "0.5",
            "--out",
        ])
        .arg(tmp.path().join("sbm"))
        .output()
        .unwrap();
    assert_code(&out, 1, "p_out >= p_in");
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::TempDir::new().unwrap();

    // Nonexistent config file.
    let out = bin()
        .args(["train", "--config"])
        .arg(tmp.path().join("nope.json"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_code(&out, 2, "missing config file");

    // Config referencing a bundle directory that does not exist.
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, train_config(&tmp.path().join("missing-bundle"), 4).to_string())
        .unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out2"))
        .output()
        .unwrap();
    assert_code(&out, 2, "missing bundle");

    // A garbage checkpoint fails with a data error.
    let bundle = gen_bundle(tmp.path());
    let fake = tmp.path().join("fake.ckpt");
    std::fs::write(&fake, b"not a checkpoint").unwrap();
    let out = bin()
        .args(["diagnose", "--checkpoint"])
        .arg(&fake)
        .arg("--dataset")
        .arg(&bundle)
        .arg("--out")
        .arg(tmp.path().join("diag"))
        .output()
        .unwrap();
    assert_code(&out, 2, "garbage checkpoint");
}
