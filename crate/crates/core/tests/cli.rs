//! End-to-end checks of the command line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const RUN_1D: &str = r#"{
    "H": 1.0, "N": 16, "dt": "auto", "t_end": 0.05, "force": 4.0,
    "alpha_lo": 1.0, "alpha_hi": 1.0, "ic": "poiseuille-guess", "snapshots": 3, "energy_rows": 10,
    "params": {"mu1": 1, "mu2": 1, "nu": 1, "p": 2, "tau_star": 1, "eps_reg": 1e-2}
}"#;

const RUN_2D: &str = r#"{
    "Lx": 1.0, "Ly": 1.0, "Nx": 8, "Ny": 8, "dt": "auto", "t_end": 0.01, "force": [0.0, 0.0],
    "alpha_lo": 1.0, "alpha_hi": 1.0, "ic": "zero", "snapshots": 2, "energy_rows": 5,
    "params": {"mu1": 1, "mu2": 1, "nu": 1, "p": 2, "tau_star": 1, "eps_reg": 1e-2}
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asymbingham"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("spawn binary")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn energy_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(dir.join("energy.csv")).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["run1d", "--out", s(&out)]), 2, "missing config");
    assert_eq!(code(&["verify", "--suite", "nope", "--out", s(&out)]), 2);
    assert_eq!(code(&["verify", "--samples", "0", "--out", s(&out)]), 2);
    assert!(!out.exists(), "failed argument checks must not create outputs");
    let bad = config(tmp.path(), "bad.json", "{\"H\": 1.0");
    assert_eq!(code(&["run1d", "--config", s(&bad), "--out", s(&out)]), 2);
    let c = config(tmp.path(), "c.json", RUN_1D);
    assert_eq!(code(&["run1d", "--config", s(&c), "--set", "dt=-1", "--out", s(&out)]), 2);
    assert_eq!(code(&["run1d", "--config", s(&c), "--set", "unknown=1", "--out", s(&out)]), 2);
}

#[test]
fn verify_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    assert_eq!(code(&["verify", "--suite", "gradient", "--samples", "50", "--out", s(&out)]), 0);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify_gradient.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert!(!json["reports"].as_array().unwrap().is_empty());
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "c.json", RUN_1D);
    let out = tmp.path().join("r");
    assert_eq!(code(&["run1d", "--config", s(&c), "--out", s(&out)]), 0);
    let before = std::fs::read(out.join("profile.csv")).unwrap();
    assert_eq!(code(&["run1d", "--config", s(&c), "--set", "force=1", "--out", s(&out)]), 2);
    assert_eq!(std::fs::read(out.join("profile.csv")).unwrap(), before);
    assert_eq!(code(&["run1d", "--config", s(&c), "--set", "force=1", "--out", s(&out), "--force"]), 0);
    assert_ne!(std::fs::read(out.join("profile.csv")).unwrap(), before);
}

#[test]
fn zero_initial_data_gives_zero_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "c.json", RUN_2D);
    let out = tmp.path().join("r");
    assert_eq!(code(&["run2d", "--config", s(&c), "--out", s(&out)]), 0);
    let rows = energy_rows(&out);
    assert!(rows.len() > 2);
    for row in &rows[1..] {
        for v in &row[1..] {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "row {row:?}");
        }
    }
    assert!(out.join("fields_0000.csv").exists() && out.join("fields_0001.csv").exists());
}

#[test]
fn report_passes_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "c.json", RUN_1D);
    let out = tmp.path().join("r");
    assert_eq!(code(&["run1d", "--config", s(&c), "--out", s(&out)]), 0);
    let o = run(&["report", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["energy_inequality"], "pass");

    // Inflate the final kinetic energy well past what the run supplied.
    let mut rows = energy_rows(&out);
    let k = rows[0].iter().position(|h| h == "kinetic").unwrap();
    let last = rows.len() - 1;
    let kin: f64 = rows[last][k].parse().unwrap();
    rows[last][k] = format!("{}", 10.0 * kin + 1.0);
    let text: String = rows.iter().map(|r| r.join(",") + "\n").collect();
    std::fs::write(out.join("energy.csv"), text).unwrap();
    assert_eq!(code(&["report", s(&out), "--force"]), 1);
}

#[test]
fn report_on_empty_directory_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["report", s(tmp.path())]), 2);
}

#[test]
fn unrecoverable_instability_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "c.json", RUN_1D);
    let out = tmp.path().join("r");
    let o = run(&["run1d", "--config", s(&c), "--set", "N=128", "--set", "dt=1", "--set", "t_end=2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn oracle_matches_long_run() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), "c.json", RUN_1D);
    let (ro, rr) = (tmp.path().join("o"), tmp.path().join("r"));
    assert_eq!(code(&["oracle1d", "--config", s(&c), "--set", "N=64", "--out", s(&ro)]), 0);
    let args =
        ["run1d", "--config", s(&c), "--set", "N=64", "--set", "scheme=implicit", "--set", "t_end=20", "--out", s(&rr)];
    assert_eq!(code(&args), 0);
    let oracle: Vec<f64> = std::fs::read_to_string(ro.join("oracle.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let profile = std::fs::read_to_string(rr.join("profile.csv")).unwrap();
    let header: Vec<&str> = profile.lines().next().unwrap().split(',').collect();
    let ucol = header.iter().position(|h| *h == "u").unwrap();
    let last: Vec<f64> = profile
        .lines()
        .skip(1)
        .collect::<Vec<_>>()
        .iter()
        .rev()
        .take(oracle.len())
        .rev()
        .map(|l| l.split(',').nth(ucol).unwrap().parse().unwrap())
        .collect();
    let scale = oracle.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let err = oracle.iter().zip(&last).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    // Second-order discretization error of the time-stepped profile.
    assert!(err / scale < 1e-4, "relative error {}", err / scale);
}
