//! End-to-end checks of the covot binary: exit codes, emitted files, and
//! the flag > config-file > default precedence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn covot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("summary.json")).expect("summary.json exists");
    serde_json::from_str(&text).expect("summary.json is valid JSON")
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

#[test]
fn solve_reports_the_trivial_distance() {
    let dir = tempdir().unwrap();
    let cost = dir.path().join("c.txt");
    write(&cost, "1 1\n0.5\n");
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "solve",
        "--cost",
        cost.to_str().unwrap(),
        "--plan",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");

    let s = summary(&out_dir);
    assert_eq!(s["results"]["distance"], 0.5);
    assert_eq!(s["results"]["converged"], true);
    // The only 1x1 coupling puts all mass on the single cell.
    let plan = fs::read_to_string(out_dir.join("plan.csv")).unwrap();
    assert_eq!(plan.trim(), "1");
}

#[test]
fn solve_trace_records_every_iteration() {
    let dir = tempdir().unwrap();
    let cost = dir.path().join("c.txt");
    write(&cost, "2 2\n0.1 0.9\n0.7 0.2\n");
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "solve",
        "--cost",
        cost.to_str().unwrap(),
        "--trace",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");

    let s = summary(&out_dir);
    let iterations = s["results"]["iterations"].as_u64().unwrap();
    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,delta_v,distance"));
    assert_eq!(lines.count() as u64, iterations);
}

#[test]
fn negative_lambda_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let cost = dir.path().join("c.txt");
    write(&cost, "1 1\n0.5\n");
    let out = covot(&[
        "solve",
        "--cost",
        cost.to_str().unwrap(),
        "--lambda",
        "-0.5",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda"), "stderr: {err}");
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = covot(&["solve", "--out-dir", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn nonconvergence_exits_two_but_still_writes_the_summary() {
    let dir = tempdir().unwrap();
    let cost = dir.path().join("c.txt");
    write(&cost, "2 2\n0.1 0.9\n0.7 0.2\n");
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "solve",
        "--cost",
        cost.to_str().unwrap(),
        "--lambda",
        "0.05",
        "--delta-v",
        "1e-12",
        "--max-iters",
        "1",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let s = summary(&out_dir);
    assert_eq!(s["results"]["converged"], false);
    assert_eq!(s["results"]["iterations"], 1);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempdir().unwrap();
    let cost = dir.path().join("c.txt");
    write(&cost, "1 1\n0.5\n");
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        &format!(
            r#"{{"cost": "{}", "lambda": 0.3}}"#,
            cost.to_str().unwrap()
        ),
    );
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--lambda",
        "0.7",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let s = summary(&out_dir);
    assert_eq!(s["config"]["lambda"], 0.7);
    assert_eq!(s["config"]["max_iters"], 1000);
}

#[test]
fn zero_outer_steps_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let out = covot(&[
        "train",
        "--outer-steps",
        "0",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablation_arms_share_their_starting_row() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "train",
        "--outer-steps",
        "5",
        "--seed",
        "9",
        "--ablate",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");

    let guided = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    let base = fs::read_to_string(out_dir.join("history_ablation.csv")).unwrap();
    // Both arms start from the identical model, so the step-0 metrics row
    // (recorded before any update) must match character for character.
    assert_eq!(
        guided.lines().nth(1).unwrap(),
        base.lines().nth(1).unwrap()
    );
    assert_ne!(guided, base);
    assert!(out_dir.join("model.txt").exists());
    assert!(out_dir.join("model_ablation.txt").exists());
}

#[test]
fn zero_noise_heatmap_peaks_at_one() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "heatmap",
        "--seed",
        "7",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");

    // Noise-free pixels are exact prototype copies: cosine 1.0 on the
    // selected class, so the max is exactly 1 and those cells map to 255.
    let s = summary(&out_dir);
    assert_eq!(s["results"]["max"], 1.0);
    let csv = fs::read_to_string(out_dir.join("heatmap.csv")).unwrap();
    let pgm = fs::read(out_dir.join("heatmap.pgm")).unwrap();
    let header_len = "P5\n8 8\n255\n".len();
    let pixels = &pgm[header_len..];
    let values: Vec<f64> = csv
        .split([',', '\n'])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(values.len(), pixels.len());
    for (v, p) in values.iter().zip(pixels) {
        assert_eq!(*v == 1.0, *p == 255, "value {v} maps to byte {p}");
    }
}

#[test]
fn constant_volume_renders_mid_gray() {
    let dir = tempdir().unwrap();
    let vol = dir.path().join("vol.csv");
    write(&vol, "0.7\n0.7\n0.7\n0.7\n");
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "heatmap",
        "--volume",
        vol.to_str().unwrap(),
        "--height",
        "2",
        "--width",
        "2",
        "--class",
        "0",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let s = summary(&out_dir);
    assert_eq!(s["results"]["constant"], true);
    let pgm = fs::read(out_dir.join("heatmap.pgm")).unwrap();
    let pixels = &pgm["P5\n2 2\n255\n".len()..];
    assert_eq!(pixels, &[128, 128, 128, 128]);
}

#[test]
fn heatmap_class_outside_volume_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let vol = dir.path().join("vol.csv");
    write(&vol, "0.1,0.2\n0.3,0.4\n");
    let out = covot(&[
        "heatmap",
        "--volume",
        vol.to_str().unwrap(),
        "--height",
        "1",
        "--width",
        "2",
        "--class",
        "5",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_with_zero_trials_passes_vacuously() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = covot(&[
        "verify",
        "--trials",
        "0",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let s = summary(&out_dir);
    assert_eq!(s["results"]["all_passed"], true);
    assert_eq!(s["results"]["solves"], 0);
}

#[test]
fn verify_rejects_an_oversized_instance_cap() {
    let dir = tempdir().unwrap();
    let out = covot(&[
        "verify",
        "--max-size",
        "40",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_clean() {
    assert!(covot(&["--help"]).status.success());
    assert!(covot(&["--version"]).status.success());
    assert_eq!(covot(&["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(covot(&[]).status.code(), Some(1));
}
