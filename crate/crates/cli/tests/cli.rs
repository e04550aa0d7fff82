use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bsrd(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bsrd")).args(args).output().expect("spawn bsrd");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_config(cmd: &str, config: &Path, out: &Path) -> (i32, Value) {
    let (code, _, err) = bsrd(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(out.join("manifest.json")).unwrap_or_else(|e| panic!("no manifest ({e}); stderr: {err}"));
    (code, serde_json::from_str(&text).unwrap())
}

#[test]
fn check_toy_open_reports_a_reproducible_witness() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run_config("check", &configs().join("check_toy_open.json"), dir.path());
    assert_eq!(code, 0, "{m:#}");
    assert_eq!(m["outcome"]["verdict"], "not-verified");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("checker_report.json")).unwrap()).unwrap();
    let reports = report["verdict"]["reports"].as_array().unwrap();
    assert!(reports.iter().any(|r| r["condition"] == "V2" && r["status"] == "violated" && !r["witness"].is_null()));
    let table = std::fs::read_to_string(dir.path().join("checker_table.txt")).unwrap();
    assert!(table.contains("V2"));
}

#[test]
fn simulate_toy_conserving_passes_its_monitors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run_config("simulate", &configs().join("simulate_toy_conserving.json"), dir.path());
    assert_eq!(code, 0, "{m:#}");
    assert!(m["assertions"].as_array().unwrap().iter().all(|a| a["passed"] == true));
    for f in ["monitors.csv", "mesh.json", "operators/bulk_u.coo", "snapshots/surface_v_0000.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let header = std::fs::read_to_string(dir.path().join("monitors.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "time,monitor,value");
}

#[test]
fn blowup_preset_is_detected_and_counts_as_success() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run_config("simulate", &configs().join("simulate_blowup.json"), dir.path());
    assert_eq!(code, 0, "{m:#}");
    assert_eq!(m["outcome"]["run"]["status"], "blowup_detected");
    let t_est = m["outcome"]["run"]["t_est"].as_f64().unwrap();
    assert!((0.45..=0.55).contains(&t_est), "t_est {t_est}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("simulate_toy_conserving.json");
    run_config("simulate", &cfg, a.path());
    run_config("simulate", &cfg, b.path());
    let read = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn seed_flag_changes_the_perturbation_only() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("simulate_toy_conserving.json");
    let (_, ma) = run_config("simulate", &cfg, a.path());
    let (_, mb) = {
        let (code, _, _) = bsrd(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap(), "--seed", "99"]);
        (code, serde_json::from_str::<Value>(&std::fs::read_to_string(b.path().join("manifest.json")).unwrap()).unwrap())
    };
    assert_eq!(mb["seed"], 99);
    assert_eq!(mb["provenance"]["seed"], "cli");
    assert_ne!(ma["numeric_hash"], mb["numeric_hash"]);
}

#[test]
fn unknown_key_is_a_config_error_with_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model": "toy_conserving", "mesh": {"n_thetaa": 32}}"#).unwrap();
    let out = dir.path().join("out");
    let (code, m) = run_config("simulate", &cfg, &out);
    assert_eq!(code, 2);
    assert_eq!(m["error"]["kind"], "config");
    let msg = m["error"]["message"].as_str().unwrap();
    assert!(msg.contains("mesh") && msg.contains("n_theta"), "{msg}");
}

#[test]
fn command_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run_config("simulate", &configs().join("check_toy_open.json"), dir.path());
    assert_eq!(code, 2);
    assert_eq!(m["error"]["kind"], "config");
}

#[test]
fn failing_expectation_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("expect.json");
    std::fs::write(&cfg, r#"{"model": "toy_open", "checker": {"expect": "hypotheses-verified"}}"#).unwrap();
    let (code, m) = run_config("check", &cfg, &dir.path().join("out"));
    assert_eq!(code, 1, "{m:#}");
}

#[test]
fn help_lists_all_subcommands() {
    let (code, out, _) = bsrd(&["--help"]);
    assert_eq!(code, 0);
    for c in ["check", "simulate", "potential", "converge"] {
        assert!(out.contains(c));
    }
}
