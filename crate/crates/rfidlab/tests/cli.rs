//! End-to-end checks of the command-line surface: subcommands, exit codes,
//! and byte-identical reruns of the summary document.

use std::path::Path;
use std::process::{Command, Output};

fn rfidlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfidlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn run_prints_a_summary_and_exits_zero() {
    let out = rfidlab(&[
        "run",
        "--protocol",
        "zhuo",
        "--variant",
        "original",
        "--k",
        "64",
        "--sessions",
        "50",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["counts"]["accepted"], 50);
    assert_eq!(report["config"]["protocol"], "zhuo");
    assert!(
        report.get("wall_time_ms").is_none(),
        "wall time must stay out of the summary"
    );
}

#[test]
fn attack_accepts_every_documented_name() {
    for (name, variant) in [
        ("zhuo-replay", "original"),
        ("yu-msbflip-a", "original"),
        ("yu-msbflip-b", "hardened"),
        ("yu-tracking", "original"),
    ] {
        let out = rfidlab(&[
            "attack",
            "--name",
            name,
            "--variant",
            variant,
            "--k",
            "16",
            "--trials",
            "3",
            "--seed",
            "1",
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "attack {name} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec![
            "run",
            "--protocol",
            "zhuo",
            "--variant",
            "original",
            "--k",
            "63",
        ],
        vec!["run", "--protocol", "bogus", "--variant", "original"],
        vec![
            "attack",
            "--name",
            "zhuo-replay",
            "--variant",
            "original",
            "--bit-budget",
            "2",
        ],
        vec!["oracle", "--k", "32", "--trials", "1"],
        vec!["nonsense"],
    ] {
        let out = rfidlab(&args);
        assert_eq!(out.status.code(), Some(1), "args {args:?}");
    }
}

#[test]
fn oracle_run_is_clean_and_exits_zero() {
    let out = rfidlab(&["oracle", "--k", "8", "--trials", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["mismatches"], 0);
    assert_eq!(report["total_sessions"], 200);
}

#[test]
fn unwritable_output_exits_three() {
    let out = rfidlab(&[
        "run",
        "--protocol",
        "zhuo",
        "--variant",
        "original",
        "--sessions",
        "1",
        "--out",
        "/nonexistent-dir/report.json",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn same_seed_writes_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let read = |path: &Path| std::fs::read(path).unwrap();
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    for path in [&first, &second] {
        let out = rfidlab(&[
            "attack",
            "--name",
            "yu-msbflip-a",
            "--variant",
            "original",
            "--k",
            "32",
            "--trials",
            "10",
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(read(&first), read(&second));
}

#[test]
fn transcript_log_is_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("transcripts.jsonl");
    let out = rfidlab(&[
        "run",
        "--protocol",
        "yu",
        "--variant",
        "original",
        "--k",
        "16",
        "--sessions",
        "3",
        "--seed",
        "2",
        "--transcripts",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let body = std::fs::read_to_string(&log).unwrap();
    assert_eq!(body.lines().count(), 36); // twelve edges per session
    for line in body.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}
