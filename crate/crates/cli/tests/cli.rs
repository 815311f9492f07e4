//! End-to-end runs of the binary: artifact shapes, determinism, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_smoothfix");

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .args(["--out-dir", dir.to_str().unwrap()])
        .env_remove("SMOOTHFIX_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn spectral_reports_the_quicksort_exponent() {
    let dir = tmp("spectral");
    let out = run(&["spectral", "--model", "quicksort", "--seed", "1"], &dir);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.join("spectral.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((v["alpha"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(v["seed"].as_u64().unwrap(), 1);
    let digest = v["config_sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn sample_output_is_reproducible() {
    let args = [
        "sample", "--model", "uniform-split-pair", "--kind", "coupled", "--depth", "6",
        "--batch", "50", "--seed", "3",
    ];
    let d1 = tmp("sample_a");
    let d2 = tmp("sample_b");
    assert!(run(&args, &d1).status.success());
    assert!(run(&args, &d2).status.success());
    let a = fs::read(d1.join("sample.csv")).unwrap();
    let b = fs::read(d2.join("sample.csv")).unwrap();
    assert_eq!(a, b, "same configuration and seed must give the same bytes");
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# smoothfix sample seed=3 config_sha256="));
    assert_eq!(lines.next().unwrap(), "index,w,wstar");
    assert_eq!(lines.count(), 50);
}

#[test]
fn config_file_fills_missing_flags() {
    let flags = tmp("config_flags");
    let args = [
        "sample", "--model", "uniform-split-pair", "--kind", "coupled", "--depth", "6",
        "--batch", "50", "--seed", "3",
    ];
    assert!(run(&args, &flags).status.success());

    let dir = tmp("config_file");
    let cfg = dir.join("cfg.toml");
    fs::write(
        &cfg,
        "[sample]\nmodel = \"uniform-split-pair\"\nkind = \"coupled\"\ndepth = 6\nbatch = 50\n",
    )
    .unwrap();
    let out = run(
        &["--config", cfg.to_str().unwrap(), "sample", "--seed", "3"],
        &dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read(dir.join("sample.csv")).unwrap(),
        fs::read(flags.join("sample.csv")).unwrap()
    );
}

#[test]
fn verify_accepts_its_own_solution_family() {
    let dir = tmp("verify_accept");
    let out = run(
        &[
            "verify", "--model", "uniform-split-pair", "--alpha", "1", "--sigma", "0.9",
            "--depth", "8", "--batch", "600", "--n-perm", "199", "--seed", "5",
        ],
        &dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = fs::read_to_string(dir.join("verify.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["outcome"]["reject"], serde_json::Value::Bool(false));
    assert_eq!(v["params"]["statistic"], "ecf");
}

#[test]
fn verify_rejects_a_wrong_candidate_file() {
    let dir = tmp("verify_reject");
    let zeros = dir.join("zeros.txt");
    fs::write(&zeros, "0.0\n".repeat(600)).unwrap();
    let out = run(
        &[
            "verify", "--model", "quicksort", "--candidate", zeros.to_str().unwrap(),
            "--n-perm", "199", "--seed", "5",
        ],
        &dir,
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn solution_csv_feeds_straight_back_into_verify() {
    let dir = tmp("roundtrip");
    assert!(run(
        &[
            "solution", "--model", "uniform-split-pair", "--alpha", "1", "--sigma", "0.9",
            "--depth", "8", "--batch", "600", "--seed", "5",
        ],
        &dir,
    )
    .status
    .success());
    let csv = dir.join("solution.csv");
    let out = run(
        &[
            "verify", "--model", "uniform-split-pair", "--candidate", csv.to_str().unwrap(),
            "--statistic", "ecf", "--n-perm", "199", "--seed", "5",
        ],
        &dir,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn usage_errors_exit_two() {
    let dir = tmp("usage");
    // no --seed
    let out = run(&["spectral", "--model", "quicksort"], &dir);
    assert_eq!(out.status.code(), Some(2));
    // unknown family
    let out = run(&["spectral", "--model", "not-a-model", "--seed", "1"], &dir);
    assert_eq!(out.status.code(), Some(2));
    // no candidate source at all
    let out = run(&["verify", "--model", "quicksort", "--seed", "1"], &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tmp("envvar");
    let out = Command::new(BIN)
        .args(["spectral", "--model", "quicksort", "--seed", "1"])
        .env("SMOOTHFIX_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("spectral.json").exists());
}
