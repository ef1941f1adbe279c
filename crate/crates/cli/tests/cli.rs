//! End-to-end tests of the `yo` binary: exit codes, output files and
//! reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn yo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yo"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("YO_OUT_DIR")
        .output()
        .expect("spawn yo")
}

fn result(out: &Path) -> Value {
    let text = std::fs::read_to_string(out.join("result.json")).expect("result.json");
    serde_json::from_str(&text).expect("valid json")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn gen_mesh_writes_canonical_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let o = yo(&["gen-mesh", "--refine", "2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("mesh_L2.json")).unwrap();
    assert!(text.starts_with("{\"boundary_faces\":"));
    assert!(text.ends_with("}\n"));
    let r = result(dir.path());
    assert_eq!(r["passed"], true);
    assert_eq!(r["mesh"]["vertices"], 129);
    assert!(dir.path().join("timing.json").exists());
}

#[test]
fn gen_mesh_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&yo(&["gen-mesh", "--refine", "3"], a.path())), 0);
    assert_eq!(code(&yo(&["gen-mesh", "--refine", "3"], b.path())), 0);
    let x = std::fs::read(a.path().join("mesh_L3.json")).unwrap();
    let y = std::fs::read(b.path().join("mesh_L3.json")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn result_is_reproducible_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["minimize", "--refine", "2", "--init", "random", "--seed", "7"];
    assert_eq!(code(&yo(&args, dir.path())), 0);
    let first = std::fs::read(dir.path().join("result.json")).unwrap();
    let trace = std::fs::read(dir.path().join("trace.csv")).unwrap();
    assert_eq!(code(&yo(&args, dir.path())), 0);
    assert_eq!(first, std::fs::read(dir.path().join("result.json")).unwrap());
    assert_eq!(trace, std::fs::read(dir.path().join("trace.csv")).unwrap());
}

#[test]
fn mesh_from_file_round_trips_through_solve_obstacle() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&yo(&["gen-mesh", "--refine", "1"], dir.path())), 0);
    let mesh = dir.path().join("mesh_L1.json");
    let out = dir.path().join("solve");
    let o = yo(&["solve-obstacle", "--mesh", mesh.to_str().unwrap(), "--seed", "3"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(&out);
    assert!(r["obstacle"]["kkt_residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn malformed_mesh_exits_1_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dim\":3,\"vertices\":[[0,0,0],,]}").unwrap();
    let o = yo(&["solve-obstacle", "--mesh", bad.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("offset"), "stderr: {err}");
    assert!(!dir.path().join("out/result.json").exists());
}

#[test]
fn invalid_arguments_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&yo(&["minimize", "-p", "7"], dir.path())), 1);
    assert_eq!(code(&yo(&["minimize", "-n", "2"], dir.path())), 1);
    assert_eq!(code(&yo(&["bubble", "--pole-radius", "0.5"], dir.path())), 1);
    assert_eq!(code(&yo(&["solve-obstacle", "--tol", "-1"], dir.path())), 1);
    assert_eq!(code(&yo(&["no-such-command"], dir.path())), 1);
}

#[test]
fn verify_lemmas_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = yo(&["verify-lemmas", "--seeds", "50", "--dim", "20"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(dir.path());
    assert_eq!(r["lemmas"]["passed"], true);
}

#[test]
fn bubble_command_passes_at_level_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = yo(&["bubble", "--refine", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(result(dir.path())["bubbles"].as_array().unwrap().len(), 5);
}

#[test]
fn sweep_then_report_rebuilds_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = yo(&["sweep", "--levels", "1,2,3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sweep_csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(sweep_csv.lines().count(), 4);
    let out = dir.path().join("report");
    let o = yo(&["report", "--input", dir.path().to_str().unwrap()], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report_csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report_csv, sweep_csv);
}

#[test]
fn out_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_yo"))
        .args(["gen-mesh", "--refine", "1"])
        .env("YO_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(target.join("mesh_L1.json").exists());
    assert!(target.join("result.json").exists());
}
