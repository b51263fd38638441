use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn eqprop() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eqprop"));
    cmd.env_remove("EQPROP_DATA_DIR");
    cmd
}

fn idx(dims: &[u32], magic: u32, data: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend(d.to_be_bytes());
    }
    out.extend(data);
    out
}

/// Writes `n` 4x4 images per split; the label is encoded in the pixels.
fn tiny_mnist(dir: &Path, n: u32) {
    for prefix in ["train", "t10k"] {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let pixels: Vec<u8> = labels
            .iter()
            .flat_map(|&l| (0..16u8).map(move |p| if p % 10 == l { 255 } else { 0 }))
            .collect();
        fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), idx(&[n, 4, 4], 0x803, &pixels)).unwrap();
        fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), idx(&[n], 0x801, &labels)).unwrap();
    }
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

const SMALL: [&str; 8] = ["--hidden-size", "6", "--epochs", "2", "--batch-size", "8", "--n-free", "10"];

#[test]
fn help_lists_the_subcommands() {
    let out = eqprop().arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["train", "eval", "sweep", "oracle-check"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn bad_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    for body in [r#"{"learning_rate": 0.1}"#, r#"{"beta": 0.0}"#, "[1, 2]", "not json"] {
        fs::write(&cfg, body).unwrap();
        let out = eqprop().args(["train", "--config"]).arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{body}");
    }
    let out = eqprop()
        .args(["train", "--experiment", "fixed-ratio", "--method", "EP"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_check_reports_small_errors() {
    let out = eqprop().args(["oracle-check", "--count", "10"]).output().unwrap();
    let v = json_stdout(&out);
    assert_eq!(v["nets"], 10);
    assert!(v["max_aep_error"].as_f64().unwrap() < 1e-4);
    assert!(v["max_dyadic_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn train_then_eval_agree() {
    let data = tempfile::tempdir().unwrap();
    let runs = tempfile::tempdir().unwrap();
    tiny_mnist(data.path(), 40);
    let out = eqprop()
        .args(["train", "--experiment", "custom", "--method", "AEP"])
        .args(SMALL)
        .arg("--data-dir")
        .arg(data.path())
        .arg("--output-dir")
        .arg(runs.path())
        .output()
        .unwrap();
    let trained = json_stdout(&out);
    for f in ["metrics.csv", "checkpoint.json", "manifest.json"] {
        assert!(runs.path().join(f).exists(), "{f}");
    }

    let out = eqprop()
        .args(["eval", "--experiment", "custom"])
        .args(SMALL)
        .arg("--checkpoint")
        .arg(runs.path().join("checkpoint.json"))
        .arg("--data-dir")
        .arg(data.path())
        .output()
        .unwrap();
    let eval = json_stdout(&out);
    assert_eq!(eval["test_accuracy"], trained["test_accuracy"]);
    assert_eq!(eval["samples"], 40);
}

#[test]
fn divergence_exits_with_code_three() {
    let data = tempfile::tempdir().unwrap();
    let runs = tempfile::tempdir().unwrap();
    tiny_mnist(data.path(), 16);
    let out = eqprop()
        .args(["train", "--experiment", "custom", "--dt", "5"])
        .args(SMALL)
        .arg("--data-dir")
        .arg(data.path())
        .arg("--output-dir")
        .arg(runs.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn data_dir_comes_from_file_then_environment_then_flag() {
    let good = tempfile::tempdir().unwrap();
    let runs = tempfile::tempdir().unwrap();
    tiny_mnist(good.path(), 16);
    let missing = runs.path().join("nowhere");
    let cfg = runs.path().join("cfg.json");
    fs::write(
        &cfg,
        serde_json::json!({ "experiment": "feedforward", "data_dir": missing, "epochs": 1 }).to_string(),
    )
    .unwrap();
    let train = |env: Option<&Path>, flag: Option<&Path>| {
        let mut cmd = eqprop();
        cmd.args(["train", "--hidden-size", "4", "--batch-size", "8", "--config"])
            .arg(&cfg)
            .arg("--output-dir")
            .arg(runs.path().join("out"));
        if let Some(e) = env {
            cmd.env("EQPROP_DATA_DIR", e);
        }
        if let Some(f) = flag {
            cmd.arg("--data-dir").arg(f);
        }
        cmd.output().unwrap().status.code()
    };
    // Missing files are an I/O error, not a config error.
    assert_eq!(train(None, None), Some(1));
    assert_eq!(train(Some(good.path()), None), Some(0));
    assert_eq!(train(Some(&missing), Some(good.path())), Some(0));
    assert_eq!(train(Some(good.path()), Some(&missing)), Some(1));
}

#[test]
fn sweep_summarizes_every_seed() {
    let data = tempfile::tempdir().unwrap();
    let runs = tempfile::tempdir().unwrap();
    tiny_mnist(data.path(), 16);
    let out = eqprop()
        .args(["sweep", "--experiment", "feedforward", "--repetitions", "2", "--seed", "4"])
        .args(SMALL)
        .arg("--data-dir")
        .arg(data.path())
        .arg("--output-dir")
        .arg(runs.path())
        .output()
        .unwrap();
    let v = json_stdout(&out);
    assert_eq!(v["seeds"], serde_json::json!([4, 5]));
    assert_eq!(v["accuracies"].as_array().unwrap().len(), 2);
}
