use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::Value;
use symscale::io::check_output_dir;
use symscale_cli::{parse_config, RunConfig};

const SPECTRUM: &str = r#"{"space": "H2", "grid": {"h": 0.04, "R": 12}, "theta": [0, 0.3], "spectrum": {"count": 8}}"#;

const PAIR: &str = r#""vectors": {
    "f": {"terms": [{"center": [1, 0], "width": 0.6}]},
    "g": {"terms": [{"center": [0.5, 0], "width": 0.8, "coeff": [1, 0.5]}]},
    "probe": {"terms": [{"center": [1, 0], "width": 0.3}]}
}"#;

fn symscale(cmd: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{cmd}.json"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_symscale"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--quiet")
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn config_error(text: &str) -> String {
    parse_config(text).unwrap_err().to_string()
}

#[test]
fn theta_outside_the_window_is_rejected() {
    let msg = config_error(r#"{"space": "H2", "grid": {"h": 0.1, "R": 10}, "theta": [0, 1.6]}"#);
    assert!(msg.contains("pi/2"), "{msg}");
    assert!(msg.contains("1.6"), "{msg}");
    let msg = config_error(
        r#"{"space": "SL3", "grid": {"h": 0.1, "R": 10},
            "theta_sweep": {"from": [0, 0.1], "to": [0, -1.6], "steps": 4}}"#,
    );
    assert!(msg.contains("pi/2"), "{msg}");
}

#[test]
fn bad_grids_and_unknown_keys_are_rejected() {
    let msg = config_error(r#"{"space": "H2", "grid": {"h": -0.1, "R": 10}}"#);
    assert!(msg.contains("grid.h"), "{msg}");
    let msg = config_error(r#"{"space": "H2", "grid": {"h": 0.1, "R": 0}}"#);
    assert!(msg.contains("grid.R"), "{msg}");
    let msg = config_error(r#"{"space": "H2", "grid": {"h": 0.1, "R": 10}, "thetta": [0, 0.2]}"#);
    assert!(msg.contains("thetta"), "{msg}");
    let msg = config_error(r#"{"space": "H2", "grid": {"h": 0.1, "R": 10}, "spectrum": {"count": 0}}"#);
    assert!(msg.contains("count"), "{msg}");
    config_error(r#"{"space": "H3", "grid": {"h": 0.1, "R": 10}}"#);
}

#[test]
fn config_errors_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = symscale(
        "spectrum",
        r#"{"space": "H2", "grid": {"h": 0.1, "R": 10}, "theta": [0, 1.6]}"#,
        dir.path(),
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = read_json(&dir.path().join("out/error.json"));
    assert_eq!(err["category"], "config");
    assert!(err["message"].as_str().unwrap().contains("pi/2"));
}

#[test]
fn spectrum_output_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = symscale("spectrum", SPECTRUM, dir.path(), &["--threads", "1"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let first = std::fs::read(dir.path().join("out/eigenvalues.csv")).unwrap();
    let manifest = std::fs::read(dir.path().join("out/manifest.json")).unwrap();
    let b = symscale("spectrum", SPECTRUM, dir.path(), &["--threads", "3"]);
    assert!(b.status.success());
    assert_eq!(std::fs::read(dir.path().join("out/eigenvalues.csv")).unwrap(), first);
    assert_eq!(std::fs::read(dir.path().join("out/manifest.json")).unwrap(), manifest);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("# manifest:"));
    assert_eq!(text.lines().count(), 2 + 8);
}

#[test]
fn outputs_carry_the_manifest_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = symscale("spectrum", SPECTRUM, dir.path(), &[]);
    assert!(out.status.success());
    let checks = check_output_dir(&dir.path().join("out")).unwrap();
    let names: Vec<_> = checks.iter().map(|c| c.file.as_str()).collect();
    assert_eq!(names, ["eigenvalues.csv", "summary.json"]);
    assert!(checks.iter().all(|c| c.passed));

    // a file from another run is caught
    let other = SPECTRUM.replace("0.3]", "0.25]");
    let dir2 = tempfile::tempdir().unwrap();
    assert!(symscale("spectrum", &other, dir2.path(), &[]).status.success());
    std::fs::copy(dir2.path().join("out/eigenvalues.csv"), dir.path().join("out/eigenvalues.csv")).unwrap();
    let checks = check_output_dir(&dir.path().join("out")).unwrap();
    assert!(!checks[0].passed);
    assert!(checks[1].passed);
}

#[test]
fn resolvent_path_into_the_ray_is_blocked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"space": "H2", "grid": {{"h": 0.04, "R": 12}}, "theta": [0, -0.3],
            "lambda_path": [[1, -0.2], [1, 0.2], [1, 1.5]], {PAIR}}}"#
    );
    let out = symscale("resolvent", &cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = read_json(&dir.path().join("out/error.json"));
    assert_eq!(err["category"], "continuation-blocked");
    // arg(1 + 1.5i - 1/4) / 2
    let want = (1.5f64 / 0.75).atan() / 2.0;
    let got = err["min_abs_im_theta"].as_f64().unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.5536"));
}

#[test]
fn resolvent_path_within_reach_is_traced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"space": "H2", "grid": {{"h": 0.04, "R": 20}}, "theta": [0, -0.4],
            "lambda_path": [[1, -0.6], [1, 0], [1, 0.2]], {PAIR}}}"#
    );
    let out = symscale("resolvent", &cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    let sheets: Vec<_> = text.lines().skip(2).map(|l| l.split(',').nth(6).unwrap().to_owned()).collect();
    assert_eq!(sheets, ["physical", "continued", "continued"]);
    let summary = read_json(&dir.path().join("out/summary.json"));
    let cross = summary["cross_theta_residual"].as_f64().unwrap();
    assert!(cross < 1e-3, "{cross}");
    assert!(check_output_dir(&dir.path().join("out")).unwrap().iter().all(|c| c.passed));
}

#[test]
fn green_and_trajectory_runs_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"space": "H2", "grid": {{"h": 0.04, "R": 12}}, "theta": [0, 0.3], "lambda": [-1, 0], {PAIR}}}"#
    );
    let out = symscale("green", &cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/green.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 4);
    assert!(read_json(&dir.path().join("out/summary.json"))["extrapolated"].is_array());

    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"space": "H2", "grid": {"h": 0.04, "R": 12},
        "theta_sweep": {"from": [0, 0.1], "to": [0, 0.5], "steps": 3}, "spectrum": {"count": 8}}"#;
    let out = symscale("trajectory", cfg, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let paths = read_json(&dir.path().join("out/paths.json"));
    assert_eq!(paths["confirmed"].as_array().unwrap().len(), 0);
    assert!(check_output_dir(&dir.path().join("out")).unwrap().iter().all(|c| c.passed));
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_symscale"))
        .args(["spectrum", "--quiet", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        prop_oneof![Just("H2"), Just("SL3")],
        0.005f64..0.2,
        5.0f64..40.0,
        -1.5f64..1.5,
        1usize..60,
        any::<u64>(),
        prop::option::of((-3.0f64..3.0, -3.0f64..3.0)),
    )
        .prop_map(|(space, h, r, b, count, seed, lambda)| {
            let lambda = lambda.map_or(String::new(), |(a, b)| format!(r#", "lambda": [{a:?}, {b:?}]"#));
            let text = format!(
                r#"{{"space": "{space}", "grid": {{"h": {h:?}, "R": {r:?}}}, "theta": [0, {b:?}],
                    "spectrum": {{"count": {count}}}, "seed": {seed}{lambda}}}"#
            );
            parse_config(&text).unwrap()
        })
}

proptest! {
    #[test]
    fn config_round_trips(cfg in config()) {
        let back = parse_config(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), cfg.to_json());
    }
}
