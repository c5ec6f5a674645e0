use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use kornlab::gridfield::io::{self, FieldData};
use kornlab::gridfield::PeriodicGrid;
use kornlab::kornfem::BuiltinDomain;

fn kornlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kornlab"))
        .args(args)
        .env_remove("KORNLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn korn_square_report() {
    let out = kornlab(&["korn", "--refine", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&out);
    assert_eq!(r["command"], "korn");
    assert_eq!(r["config"]["refine"], 2);
    let k: Vec<f64> = r["result"]["kappa_sq"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(k.len(), 3);
    assert!((k[0] - 2.0).abs() < 1e-12);
    assert!(k.iter().all(|v| *v <= 2.0 + 1e-9));
}

#[test]
fn korn_report_file_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("korn.json");
    std::fs::write(&cfg, r#"{"domain": "square", "refine": 1, "bc": "dirichlet"}"#).unwrap();
    let report = dir.path().join("out.json");
    let out = kornlab(&["korn", "--config", path_str(&cfg), "--refine", "2", "--report", path_str(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["config"]["bc"], "dirichlet");
    assert_eq!(r["config"]["refine"], 2);
}

#[test]
fn disk_sweep_notes_deflation() {
    let out = kornlab(&["korn", "--domain", "disk", "--refine", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let notes = json(&out)["notes"].to_string();
    assert!(notes.contains("deflated"), "{notes}");
}

#[test]
fn mesh_file_roundtrip_and_malformed_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, BuiltinDomain::Square.mesh(2).unwrap().to_json()).unwrap();
    let out = kornlab(&["korn", "--mesh", path_str(&good)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(json(&out)["result"]["kappa_sq"].as_f64().unwrap() <= 2.0 + 1e-9);

    // clockwise triangle
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"vertices": [[0,0],[1,0],[0,1]], "triangles": [[0,2,1]], "boundary": [[0,2],[2,1],[1,0]]}"#,
    )
    .unwrap();
    let out = kornlab(&["korn", "--mesh", path_str(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("non-positive area"), "{}", stderr(&out));
}

#[test]
fn rigidity_rotated_far_field() {
    let out = kornlab(&["rigidity", "--n", "256", "--r0", "1.0472"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = &json(&out)["result"];
    assert!((r["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!(r["theta_error"].as_f64().unwrap().abs() < 1e-6);
    assert!((r["optimal_theta"].as_f64().unwrap() - 1.0472).abs() < 1e-6);
}

#[test]
fn rigidity_saves_gradient_and_rejects_zero_angle() {
    let dir = tempfile::tempdir().unwrap();
    let grad = dir.path().join("grad.bin");
    let out = kornlab(&["rigidity", "--n", "64", "--save-gradient", path_str(&grad)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let g = io::load(&grad).unwrap().into_matrix().unwrap();
    assert_eq!(g.grid.n(), 64);

    let zero = dir.path().join("zero.csv");
    let grid = PeriodicGrid::new(32, 20.0).unwrap();
    io::save(&FieldData { grid, components: vec![vec![0.0; grid.len()]] }, &zero).unwrap();
    let out = kornlab(&["rigidity", "--alpha-file", path_str(&zero)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn shell_constant_profile_is_degenerate() {
    let out = kornlab(&["shell", "--profile", "0.2"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("constant"));
}

#[test]
fn shell_single_thickness_has_no_slope() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = kornlab(&["shell", "--h-list", "0.1", "--csv", path_str(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 2, "{table}");
    assert!(table.starts_with("h,"));
    assert!(json(&out)["result"]["slope"].is_null());

    let out = kornlab(&["shell", "--h-list", "0.05,0.1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn selftest_is_deterministic() {
    let args = ["selftest", "--samples", "2000"];
    let (a, b) = (kornlab(&args), kornlab(&args));
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8_lossy(&a.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!text.contains("FAIL"));
}

#[test]
fn selftest_catches_wrong_det_constant() {
    let out = kornlab(&["selftest", "--samples", "2000", "--break-det-constant"]);
    assert_eq!(code(&out), 4);
    let text = String::from_utf8_lossy(&out.stdout);
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failed.len(), 1, "{text}");
    assert!(failed[0].contains("det"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_kornlab"))
        .args(["selftest", "--samples", "10"])
        .env("KORNLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("KORNLAB_THREADS"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n": 64, "resolution": 3}"#).unwrap();
    let out = kornlab(&["rigidity", "--config", path_str(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("resolution"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&kornlab(&["korn", "--bc", "neumann"])), 2);
    assert_eq!(code(&kornlab(&["frobnicate"])), 2);
    assert_eq!(code(&kornlab(&["--version"])), 0);
}
