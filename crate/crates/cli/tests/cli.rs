use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use slaglab::grid::{write_field, GridField};

fn slaglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slaglab")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn round_quadratic(dir: &Path) -> std::path::PathBuf {
    let l = 1.0 / 3f64.sqrt();
    let u = GridField::cube(3, 13, 1.0, |x| 0.5 * l * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).unwrap();
    let path = dir.join("q.grid");
    write_field(&path, &u).unwrap();
    path
}

#[test]
fn verify_catalog_warren() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.json");
    let o = slaglab(&["verify-catalog", "--entry", "warren", "--nodes", "9", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["command"], "verify-catalog");
    assert_eq!(r["passed"], true);
    assert!(r["result"]["max_residual"].as_f64().unwrap() < 1e-11);
}

#[test]
fn rotate_round_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let input = round_quadratic(dir.path());
    let out = dir.path().join("r.grid");
    let rep = dir.path().join("r.json");
    let o = slaglab(&["rotate", "--in", p(&input), "--beta", "1.0471976", "--out", p(&out), "--report", p(&rep)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&rep);
    let eig: Vec<f64> = r["result"]["center_hessian"]["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(eig.len(), 3);
    for e in eig {
        assert!((e + 1.0 / 3f64.sqrt()).abs() < 1e-5, "{e}");
    }
    assert!(out.exists());
}

#[test]
fn missing_theta_for_slag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = round_quadratic(dir.path());
    let out = dir.path().join("s.grid");
    let o = slaglab(&["solve", "--op", "slag", "--boundary", p(&input), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn unreadable_input_is_a_usage_error() {
    let o = slaglab(&["rotate", "--in", "/nonexistent/field.grid", "--beta", "0.5"]);
    assert_eq!(code(&o), 2);
    let o = slaglab(&["no-such-command"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_check_exits_one_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let o = slaglab(&["probe-levelset", "--theta", "0.5", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert!(r["error"].as_str().unwrap().contains("refused"));
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command": "probe-levelset", "n": 4, "theta": 3.3, "trials": 50, "seed": 5}"#).unwrap();
    let out = dir.path().join("p.json");
    let o = slaglab(&["--config", p(&cfg), "probe-levelset", "--trials", "70", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["config"]["n"], 4);
    assert_eq!(r["config"]["trials"], 70);
    assert_eq!(r["result"]["trials"], 70);
    assert_eq!(r["seed"], 5);

    std::fs::write(&cfg, r#"{"command": "solve"}"#).unwrap();
    assert_eq!(code(&slaglab(&["--config", p(&cfg), "probe-levelset", "--theta", "2.0"])), 2);
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(code(&slaglab(&["--config", p(&cfg), "probe-levelset", "--theta", "2.0"])), 2);
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = slaglab(&["probe-levelset", "--n", "3", "--theta", "-1.8", "--trials", "300", "--seed", "17", "--out", p(&out)]);
        assert_eq!(code(&o), 0);
        runs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn sample_solve_and_check_viscosity() {
    let dir = tempfile::tempdir().unwrap();
    let bc = dir.path().join("bc.grid");
    let o = slaglab(&["catalog", "sample", "--entry", "warren", "--nodes", "9", "--box", "0.5", "--out", p(&bc)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sol = dir.path().join("sol.grid");
    let rep = dir.path().join("solve.json");
    let o = slaglab(&["solve", "--op", "sigma2", "--boundary", p(&bc), "--out", p(&sol), "--report", p(&rep)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report(&rep)["result"]["report"]["final_residual"].as_f64().unwrap() <= 1e-10);

    let vis = dir.path().join("v.json");
    let o = slaglab(&["check-viscosity", "--field", p(&sol), "--op", "sigma2", "--ineq", "4.3", "--out", p(&vis)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&vis);
    assert_eq!(r["result"]["report"]["inequality"], "eq4.3");

    // the sampled field is not a discrete solution and is refused
    let o = slaglab(&["check-viscosity", "--field", p(&bc), "--op", "sigma2", "--ineq", "4.3", "--out", p(&vis)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn analyze_writes_slices() {
    let dir = tempfile::tempdir().unwrap();
    let input = round_quadratic(dir.path());
    let out = dir.path().join("an.json");
    let o = slaglab(&["analyze", "--field", p(&input), "--report", "rank", "--slice", "z=0", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("an.lambda_min.csv");
    let pgm = dir.path().join("an.lambda_min.pgm");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 11);
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5\n11 11\n255\n"));
    let r = report(&out);
    assert_eq!(r["result"]["max_rank"], 3);

    let o = slaglab(&["analyze", "--field", p(&input), "--report", "split", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(report(&out)["result"]["verdict"], "no_split");
    assert_eq!(code(&slaglab(&["analyze", "--field", p(&input), "--slice", "w=1"])), 2);
}

#[test]
fn hom2_audit_and_transforms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    let o = slaglab(&["hom2-audit", "--diag", "1,2,3", "--samples", "200", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&out)["result"]["verdict"], "quadratic_confirmed");

    let input = round_quadratic(dir.path());
    for cmd in ["legendre", "lewy"] {
        let g = dir.path().join(format!("{cmd}.grid"));
        let o = slaglab(&[cmd, "--in", p(&input), "--out", p(&g)]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(slaglab::grid::read_field(&g).is_ok());
    }
}
