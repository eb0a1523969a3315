use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pasa::report::EstimateRecord;

fn pasa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pasa")).args(args).output().expect("spawn pasa")
}

fn ok(args: &[&str]) -> String {
    let out = pasa(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_fit_and_recombine() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let blocks = dir.path().join("blocks");
    ok(&["--seed", "5", "simulate", "--family", "logistic", "--n", "20000", "--out", path(&csv)]);
    let head = fs::read_to_string(&csv).unwrap();
    assert_eq!(head.lines().count(), 20_001);
    assert!(head.starts_with("y,"));

    let fitted = ok(&[
        "--seed", "5", "--format", "json", "fit", "--family", "logistic", "--input", path(&csv), "--k", "4", "--q", "3",
        "--summaries", path(&blocks),
    ]);
    let fitted = EstimateRecord::from_json(&fitted).unwrap();
    assert_eq!(fitted.k, 4);
    assert_eq!(fitted.total_n, 20_000);
    assert_eq!(fs::read_dir(&blocks).unwrap().count(), 4);

    let combined = EstimateRecord::from_json(&ok(&["--format", "json", "combine", path(&blocks)])).unwrap();
    for (a, b) in combined.beta.iter().zip(&fitted.beta) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    for (a, b) in combined.se.iter().zip(&fitted.se) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn table_and_csv_formats() {
    let table = ok(&["--seed", "1", "--format", "table", "fit", "--family", "gaussian", "--n", "5000", "--k", "2", "--q", "2"]);
    assert!(table.lines().count() >= 6, "{table}");
    let csv = ok(&["--seed", "1", "--format", "csv", "fit", "--family", "gaussian", "--n", "5000", "--k", "2", "--q", "2"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "term,estimate,se,lower,upper");
    assert_eq!(lines.len(), 6);
}

#[test]
fn replicate_grid_emits_one_report_per_cell() {
    let out = ok(&[
        "--seed", "2", "--format", "json", "replicate", "--family", "gaussian", "--n", "4000", "--strategy", "pasa",
        "--k", "1,4", "--q", "1,2", "--reps", "8",
    ]);
    let reports = pasa::report::parse_reports(&out).unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r.reps == 8 && r.failed == 0));
}

#[test]
fn configuration_errors_exit_with_two() {
    let out = pasa(&["fit", "--family", "gaussian", "--n", "1000", "--k", "0"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[run]\nnot_a_field = 1\n").unwrap();
    let out = pasa(&["--config", path(&bad), "fit", "--n", "1000"]);
    assert_eq!(out.status.code(), Some(2));

    let out = pasa(&["combine", path(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn collinear_input_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("collinear.csv");
    let mut text = String::from("y,a,b\n");
    for i in 0..200 {
        let a = (i % 17) as f64 * 0.5;
        text.push_str(&format!("{},{a},{}\n", a + (i % 3) as f64, 2.0 * a));
    }
    fs::write(&csv, text).unwrap();
    let out = pasa(&["fit", "--family", "gaussian", "--input", path(&csv), "--k", "1", "--q", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
