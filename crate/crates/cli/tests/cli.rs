//! End-to-end tests against the built binary: output determinism, report
//! shapes, exit codes, and the no-partial-output contract.

use std::path::PathBuf;
use std::process::{Command, Output};

fn horolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horolab"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("horolab-{}-{name}", std::process::id()))
}

/// Pulls the number following `"key": ` out of a JSON report.
fn extract(report: &str, key: &str) -> f64 {
    let marker = format!("\"{key}\": ");
    let start = report.find(&marker).unwrap_or_else(|| panic!("{key} in report")) + marker.len();
    let rest = &report[start..];
    let end = rest
        .find([',', '\n'])
        .unwrap_or_else(|| panic!("{key} value terminated"));
    rest[..end].parse().expect("value parses as f64")
}

#[test]
fn identical_config_gives_identical_bytes() {
    let args = ["volume", "--tmax", "6", "--ndirs", "16", "--dt", "0.01"];
    let first = horolab(&args);
    let second = horolab(&args);
    assert!(first.status.success());
    assert!(!first.stdout.is_empty());
    assert_eq!(first.stdout, second.stdout);

    let report = stdout(&first);
    let c = extract(&report, "c");
    let closed = extract(&report, "closedFormAtTmax");
    assert!((c - closed).abs() < 1e-8, "c {c} vs closed form {closed}");
}

#[test]
fn seeded_experiments_are_deterministic_and_accurate() {
    let args = ["busemann", "--ndirs", "20", "--seed", "7"];
    let first = horolab(&args);
    let second = horolab(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let max_delta = extract(&stdout(&first), "maxAbsDelta");
    assert!(max_delta < 1e-6, "max |Δ| = {max_delta}");
}

#[test]
fn usage_errors_exit_2_and_leave_no_output_file() {
    let path = temp_path("usage.json");
    let _ = std::fs::remove_file(&path);
    let out = horolab(&[
        "volume",
        "--eps",
        "0.1",
        "--out",
        path.to_str().expect("temp path is utf-8"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("\"kind\": \"usage\""));
    assert!(!path.exists(), "failed run must not create {}", path.display());
}

#[test]
fn exhausted_budget_exits_4() {
    let out = horolab(&["orbit-count", "--budget", "100"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("\"kind\": \"budget\""));
    assert!(out.stdout.is_empty());
}

#[test]
fn orbit_csv_has_header_plus_one_row_per_time() {
    let out = horolab(&["orbit-count", "--tmax", "5", "--format", "csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,value");
    assert_eq!(lines.len(), 6);
}

#[test]
fn margulis_map_skips_grid_points_outside_the_disk() {
    let out = horolab(&[
        "margulis-map",
        "--grid-n",
        "3",
        "--tmax",
        "5",
        "--ndirs",
        "16",
        "--dt",
        "0.01",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,c");
    // A 3×3 grid over the octagon bounding box has its 4 corners outside
    // the unit disk.
    assert_eq!(lines.len(), 6);
}

#[test]
fn report_goes_to_the_file_when_out_is_given() {
    let path = temp_path("volume.json");
    let _ = std::fs::remove_file(&path);
    let args = ["volume", "--tmax", "4", "--ndirs", "16", "--dt", "0.01"];
    let to_stdout = horolab(&args);
    let mut with_out: Vec<&str> = args.to_vec();
    let path_str = path.to_str().expect("temp path is utf-8").to_owned();
    with_out.extend(["--out", &path_str]);
    let to_file = horolab(&with_out);

    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    let written = std::fs::read_to_string(&path).expect("report file written");
    // The file body matches the stdout body except for the echoed target.
    assert_eq!(
        written.replace(&path_str, "stdout"),
        stdout(&to_stdout)
    );
    std::fs::remove_file(&path).expect("cleanup");
}

#[test]
fn help_exits_cleanly() {
    let out = horolab(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in [
        "volume",
        "orbit-count",
        "busemann",
        "ps-measure",
        "margulis-map",
        "entropy",
        "rigidity",
    ] {
        assert!(text.contains(name), "--help lists {name}");
    }
}
