use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn emac(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emac"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = emac(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SIGNAL: &str =
    r#"{"dims": [6, 5], "freqs": [[0.1, 0.7], [0.55, 0.2]], "amps": [[1.0, 0.0], [0.0, -2.0]]}"#;

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("signal.json"), SIGNAL).unwrap();
    ok(
        tmp.path(),
        &["synth", "--spec", "signal.json", "--out", "a"],
    );
    ok(
        tmp.path(),
        &["synth", "--spec", "signal.json", "--out", "b"],
    );
    let a = fs::read(tmp.path().join("a/signal.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/signal.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 30);
    // x(0,0) is the sum of the amplitudes.
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "0,0,1.0000000000000000e0,-2.0000000000000000e0"
    );
}

#[test]
fn full_observation_recovers_exactly() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("signal.json"), SIGNAL).unwrap();
    ok(dir, &["synth", "--spec", "signal.json", "--out", "."]);
    ok(
        dir,
        &["sample", "--spec", "signal.json", "--m", "30", "--out", "."],
    );
    ok(
        dir,
        &[
            "recover",
            "--spec",
            "observations.json",
            "--truth",
            "signal.csv",
            "--out",
            ".",
        ],
    );
    let summary = json(&dir.join("recovery.json"));
    assert!(summary["nmse"].as_f64().unwrap() <= 1e-10);
    let recovered = fs::read_to_string(dir.join("recovered.csv")).unwrap();
    assert_eq!(recovered.lines().count(), 31);
    assert!(fs::read_to_string(dir.join("history.csv"))
        .unwrap()
        .starts_with("iter,tau,rank,rel_change\n"));
}

#[test]
fn sampling_is_seed_deterministic() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("signal.json"), SIGNAL).unwrap();
    for (out, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        ok(
            dir,
            &[
                "sample",
                "--spec",
                "signal.json",
                "--m",
                "12",
                "--snr",
                "5",
                "--seed",
                seed,
                "--out",
                out,
            ],
        );
    }
    let read = |d: &str| fs::read(dir.join(d).join("observations.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let obs = json(&dir.join("a/observations.json"));
    assert_eq!(obs["indices"].as_array().unwrap().len(), 12);
    assert!(obs["noise_level"].as_f64().unwrap() > 0.0);
}

#[test]
fn phase_transition_writes_one_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let spec = r#"{"kind": "phase_transition", "dims": [6, 6], "trials": 3,
                   "grid": {"ranks": [1, 2], "samples": [0, 36]}}"#;
    fs::write(dir.join("spec.json"), spec).unwrap();
    ok(
        dir,
        &[
            "phase-transition",
            "--spec",
            "spec.json",
            "--threads",
            "1",
            "--out",
            ".",
        ],
    );
    let text = fs::read_to_string(dir.join("phase_transition.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,m,successes,trials,success_rate");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1,0,0,3,"));
    assert!(lines[2].starts_with("1,36,3,3,"));
    let summary = json(&dir.join("phase_summary.json"));
    assert_eq!(summary["minimal_m"][0], serde_json::json!([1, 36]));
}

#[test]
fn incoherence_batch_has_no_violations() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &[
            "incoherence",
            "--batch",
            "30",
            "--dims",
            "7,6",
            "--out",
            ".",
        ],
    );
    let summary = json(&tmp.path().join("incoherence_batch.json"));
    assert_eq!(summary["instances"], 30);
    assert_eq!(summary["violations"], 0);
}

#[test]
fn single_signal_reports_and_certificate() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("signal.json"), SIGNAL).unwrap();
    ok(
        dir,
        &[
            "incoherence",
            "--spec",
            "signal.json",
            "--m",
            "20",
            "--out",
            ".",
        ],
    );
    let rep = json(&dir.join("incoherence.json"));
    assert_eq!(rep["rank"], 2);
    assert_eq!(rep["sample_bounds"]["m"], 20);
    ok(
        dir,
        &[
            "certify",
            "--spec",
            "signal.json",
            "--m",
            "30",
            "--out",
            ".",
        ],
    );
    let cert = json(&dir.join("certificate.json"));
    assert_eq!(
        cert["gate"].as_bool().unwrap(),
        cert["concentration"].as_f64().unwrap() <= 0.5
    );
    assert!(cert["golfing"]["j0"].as_u64().unwrap() >= 1);
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("signal.json"), SIGNAL).unwrap();
    fs::write(dir.join("broken.json"), "{not json").unwrap();
    let code = |args: &[&str]| emac(dir, args).status.code();
    assert_eq!(code(&["synth", "--spec", "broken.json"]), Some(2));
    assert_eq!(
        code(&["sample", "--spec", "signal.json", "--m", "31"]),
        Some(2)
    );
    assert_eq!(code(&["synth", "--spec", "missing.json"]), Some(1));
    assert_eq!(code(&["recover", "--spec", "signal.json"]), Some(2));
    fs::write(dir.join("noisy.json"), r#"{"kind": "noisy_recovery"}"#).unwrap();
    assert_eq!(code(&["phase-transition", "--spec", "noisy.json"]), Some(2));
    fs::write(dir.join("typo.json"), r#"{"trails": 3}"#).unwrap();
    assert_eq!(code(&["phase-transition", "--spec", "typo.json"]), Some(2));
    assert_eq!(
        code(&["incoherence", "--spec", "signal.json", "--pencil", "9,2"]),
        Some(2)
    );
    assert_eq!(code(&["no-such-command"]), Some(2));
}
