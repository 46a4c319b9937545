//! The `tclcap` binary end to end on a small fleet.

use std::path::Path;
use std::process::{Command, Output};

fn tclcap(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclcap"))
        .args(["--devices", "300", "--horizon", "90"])
        .args(args)
        .env("TCLCAP_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

#[test]
fn track_then_audit_the_run_directory() {
    let root = tempfile::tempdir().unwrap();
    let out = tclcap(&["--preset", "t-i", "track"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["result"]["invariants"]["passed"], true);
    let dir = root.path().join("t-i");
    for f in ["config.json", "plan.csv", "trace.csv", "tracking.csv", "metrics.json", "audit.json", "tracking.svg"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }

    let out = tclcap(&["audit", dir.to_str().unwrap()], root.path());
    assert!(out.status.success());
    assert_eq!(json(&out)["result"]["passed"], true);
}

#[test]
fn plan_then_simulate_the_stored_reference() {
    let root = tempfile::tempdir().unwrap();
    let plan_dir = root.path().join("p");
    let out = tclcap(&["--preset", "t-ii", "-o", plan_dir.to_str().unwrap(), "plan"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["method"], "alternative");

    let sim_dir = root.path().join("s");
    let reference = plan_dir.join("plan.csv");
    let out = tclcap(
        &["--preset", "t-ii", "-o", sim_dir.to_str().unwrap(), "simulate", "--reference", reference.to_str().unwrap()],
        root.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sim_dir.join("trace.csv").is_file());
}

#[test]
fn sweep_writes_only_valid_pairs() {
    let root = tempfile::tempdir().unwrap();
    let out = tclcap(&["sweep", "--tau-tcl", "2,4", "--tau-ba", "2,6"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(root.path().join("sweep").join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("tau_tcl_min,tau_ba_min,s_tau,d_tau,tracking_error_pct"));
    let pairs: Vec<String> = lines.map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(pairs, ["4,4", "4,12", "8,12"]);
}

#[test]
fn errors_exit_with_code_two() {
    let root = tempfile::tempdir().unwrap();
    let out = tclcap(&["--preset", "no-such-preset", "plan"], root.path());
    assert_eq!(out.status.code(), Some(2));
    let out = tclcap(&["--config", "/definitely/missing.json", "plan"], root.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}
