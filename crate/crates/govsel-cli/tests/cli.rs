//! End-to-end tests for the `govsel` binary: run/verify round trips,
//! overwrite refusal, tamper detection, determinism, and report layout.

use std::path::Path;
use std::process::{Command, Output};

fn govsel(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_govsel"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GOVSEL_CONFIG")
        .output()
        .expect("binary runs")
}

fn small_run_args(out: &str) -> Vec<&str> {
    vec![
        "run",
        "--scenario",
        "fraud_detection",
        "--ablation",
        "B0",
        "--attack",
        "NONE",
        "--runs-per-task",
        "2",
        "--out",
        out,
    ]
}

#[test]
fn run_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let run = govsel(&small_run_args("logs"), dir.path());
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("wrote 10 runs across 1 cells"));
    assert!(dir.path().join("logs/manifest.json").exists());

    let verify = govsel(&["verify", "--logs", "logs"], dir.path());
    assert!(verify.status.success(), "{}", String::from_utf8_lossy(&verify.stderr));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("verified 10 records"));
}

#[test]
fn second_run_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    assert!(govsel(&small_run_args("logs"), dir.path()).status.success());
    let again = govsel(&small_run_args("logs"), dir.path());
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("refusing to overwrite"));

    let mut forced = small_run_args("logs");
    forced.push("--force");
    assert!(govsel(&forced, dir.path()).status.success());
}

#[test]
fn tampered_log_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    assert!(govsel(&small_run_args("logs"), dir.path()).status.success());
    let log = dir.path().join("logs/fraud_detection__B0__NONE.jsonl");
    let tampered = std::fs::read_to_string(&log)
        .unwrap()
        .replacen("\"run_index\":0", "\"run_index\":9", 1);
    std::fs::write(&log, tampered).unwrap();

    let verify = govsel(&["verify", "--logs", "logs"], dir.path());
    assert_eq!(verify.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&verify.stderr).contains("digest"));
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert!(govsel(&small_run_args("a"), dir.path()).status.success());
    assert!(govsel(&small_run_args("b"), dir.path()).status.success());
    assert_eq!(
        std::fs::read(dir.path().join("a/fraud_detection__B0__NONE.jsonl")).unwrap(),
        std::fs::read(dir.path().join("b/fraud_detection__B0__NONE.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a/manifest.json")).unwrap(),
        std::fs::read(dir.path().join("b/manifest.json")).unwrap()
    );

    let mut reseeded = small_run_args("c");
    reseeded.extend(["--seed", "7"]);
    assert!(govsel(&reseeded, dir.path()).status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a/fraud_detection__B0__NONE.jsonl")).unwrap(),
        std::fs::read(dir.path().join("c/fraud_detection__B0__NONE.jsonl")).unwrap()
    );
}

#[test]
fn report_emits_the_eight_standard_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small_run_args("logs");
    // all scenarios present, so all per-scenario tables are emitted
    args.extend([
        "--scenario",
        "payments_monitoring",
        "--scenario",
        "qbr_analysis",
        "--attack",
        "A1",
    ]);
    assert!(govsel(&args, dir.path()).status.success());

    let report = govsel(&["report", "--logs", "logs", "--out", "report"], dir.path());
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    assert!(dir.path().join("report/report.txt").exists());
    let csv_count = std::fs::read_dir(dir.path().join("report"))
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().and_then(|x| x.to_str()) == Some("csv")
        })
        .count();
    assert_eq!(csv_count, 8);
}

#[test]
fn aggregate_without_logs_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("logs")).unwrap();
    let aggregate = govsel(&["aggregate", "--logs", "logs"], dir.path());
    assert_eq!(aggregate.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&aggregate.stderr).contains("no run logs"));
}

#[test]
fn breaker_reset_appends_a_verifiable_event() {
    let dir = tempfile::tempdir().unwrap();
    assert!(govsel(&small_run_args("logs"), dir.path()).status.success());
    let reset = govsel(
        &[
            "breaker-reset",
            "--logs",
            "logs",
            "--scenario",
            "fraud_detection",
            "--ablation",
            "B0",
            "--attack",
            "NONE",
            "--note",
            "post-incident review complete",
        ],
        dir.path(),
    );
    assert!(reset.status.success(), "{}", String::from_utf8_lossy(&reset.stderr));

    let log = std::fs::read_to_string(dir.path().join("logs/fraud_detection__B0__NONE.jsonl"))
        .unwrap();
    let last = log.lines().last().unwrap();
    assert!(last.contains("\"record_type\":\"breaker_reset\""), "{last}");
    assert!(last.contains("post-incident review complete"));

    // the appended event still verifies with the rest of the log
    let verify = govsel(&["verify", "--logs", "logs"], dir.path());
    assert!(verify.status.success(), "{}", String::from_utf8_lossy(&verify.stderr));
}
