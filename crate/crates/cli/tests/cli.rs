//! End-to-end runs of the `melnikov` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use melnikov_cli::commands::BoundDoc;
use melnikov_cli::formats::{float17, FitReportDoc};
use melnikov_core::instances::{basis, FamilyId, FamilySpec};
use melnikov_core::CompiledExpression;
use tempfile::TempDir;

fn melnikov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_melnikov"))
        .args(args)
        .env_remove("MELNIKOV_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn read(p: &str) -> String {
    fs::read_to_string(Path::new(p)).unwrap()
}

#[test]
fn bound_prints_ledger_and_writes_certificate() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "whs.json");
    let o = melnikov(&["bound", "--family", "WHs-case-1", "--n", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("λ ≤ 4 + 4·0 + 4 = 8"), "{text}");
    assert!(text.contains("forced zero at h = 1"));
    assert!(text.trim_end().ends_with("bound: 7"), "{text}");
    let doc: BoundDoc = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(doc.total, 7);
    assert!(doc.certificates[0].audit().is_empty());
    assert_eq!(doc.certificates[0].stages[0].output_digests[0].len(), 64);
}

#[test]
fn ruh2_bound_covers_both_branches() {
    let o = melnikov(&["bound", "--family", "ruh2", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("ruh2-pos n=3") && text.contains("ruh2-neg n=3"));
    let total: usize = text.lines().last().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(total <= 26, "certified total {total} exceeds 8n+2");
}

#[test]
fn verify_whs4_respects_bound() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "sweep.csv");
    let o = melnikov(&["verify", "--family", "WHs-case-4", "--n", "2", "--samples", "1000", "--seed", "7", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = read(&out);
    let mut rows = 0;
    for line in csv.lines().skip_while(|l| l.starts_with('#')).skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[4], "4");
        if let Ok(c) = cols[3].parse::<usize>() {
            assert!(c <= 4, "{line}");
        }
        rows += 1;
    }
    assert_eq!(rows, 1000);
}

#[test]
fn zero_samples_is_a_usage_error() {
    let o = melnikov(&["verify", "--family", "WHs-case-4", "--n", "2", "--samples", "0"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn corrupted_certificate_is_a_violation() {
    let dir = TempDir::new().unwrap();
    let good = path(&dir, "good.json");
    assert_eq!(melnikov(&["bound", "--family", "WHs-case-4", "--n", "2", "--out", &good]).status.code(), Some(0));
    let mut doc: BoundDoc = serde_json::from_str(&read(&good)).unwrap();
    doc.certificates[0].bound -= 1;
    doc.total -= 1;
    let bad = path(&dir, "bad.json");
    fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();

    let args = |c: &str| melnikov(&["verify", "--family", "WHs-case-4", "--n", "2", "--samples", "20", "--certificate", c]);
    assert_eq!(args(&good).status.code(), Some(0));
    let o = args(&bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("certificate rejected"));
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let run = |jobs: &str, out: &str| {
        let o = melnikov(&[
            "verify", "--family", "ruh2", "--n", "2", "--samples", "40", "--seed", "11", "--jobs", jobs, "--out", out,
            "--no-header-timestamp",
        ]);
        assert_eq!(o.status.code(), Some(0));
    };
    run("1", &a);
    run("4", &b);
    assert_eq!(read(&a), read(&b));

    let (c, d) = (path(&dir, "c.csv"), path(&dir, "d.csv"));
    for (jobs, out) in [("1", &c), ("3", &d)] {
        let o = melnikov(&[
            "melnikov", "--system", "yruh2", "--n", "2", "--seed", "5", "--samples", "30", "--jobs", jobs, "--out", out,
            "--no-header-timestamp",
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(read(&c), read(&d));
}

#[test]
fn timestamp_header_is_optional() {
    let with = melnikov(&["melnikov", "--system", "ruh2", "--zero", "--samples", "2"]);
    assert!(stdout(&with).lines().any(|l| l.starts_with("# generated")));
    let without = melnikov(&["melnikov", "--system", "ruh2", "--zero", "--samples", "2", "--no-header-timestamp"]);
    assert!(!stdout(&without).contains('#'));
}

#[test]
fn environment_overrides_flags() {
    let flag = melnikov(&["build", "--family", "ruh2-neg", "--n", "2", "--seed", "9"]);
    let env = Command::new(env!("CARGO_BIN_EXE_melnikov"))
        .args(["build", "--family", "ruh2-neg", "--n", "2"])
        .env("MELNIKOV_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(stdout(&flag), stdout(&env));
    let other = melnikov(&["build", "--family", "ruh2-neg", "--n", "2", "--seed", "10"]);
    assert_ne!(stdout(&flag), stdout(&other));
}

#[test]
fn unperturbed_melnikov_is_zero() {
    let o = melnikov(&["melnikov", "--system", "WHs-case-2", "--zero", "--samples", "7", "--no-header-timestamp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let values: Vec<f64> =
        text.lines().skip_while(|l| !l.starts_with("h,")).skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 7);
    assert!(values.iter().all(|&v| v == 0.0));
}

#[test]
fn melnikov_then_fit_ruh2() {
    let dir = TempDir::new().unwrap();
    let (samples, report) = (path(&dir, "m.csv"), path(&dir, "fit.json"));
    let o = melnikov(&["melnikov", "--system", "ruh2", "--n", "1", "--seed", "3", "--samples", "120", "--out", &samples]);
    assert_eq!(o.status.code(), Some(0));
    let o = melnikov(&["fit", "--family", "ruh2-pos", "--n", "1", "--input", &samples, "--out", &report]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: FitReportDoc = serde_json::from_str(&read(&report)).unwrap();
    assert!(fit.relative_residual < 1e-5, "{}", fit.relative_residual);
}

#[test]
fn fit_of_in_span_samples() {
    let family = FamilySpec::new(FamilyId::Ruh2Neg, 2).unwrap();
    let b: Vec<CompiledExpression> = basis(&family).unwrap().iter().map(|e| CompiledExpression::new(&e.expr)).collect();
    let mut csv = String::from("h,M,error,status\n");
    for i in 0..60 {
        let h = -1.05 * 20f64.powf(i as f64 / 59.0);
        let m: f64 = b.iter().enumerate().map(|(k, c)| (k as f64 - 2.5) * c.value(h)).sum();
        csv += &format!("{},{},0,ok\n", float17(h), float17(m));
    }
    let dir = TempDir::new().unwrap();
    let (input, report) = (path(&dir, "s.csv"), path(&dir, "fit.json"));
    fs::write(&input, csv).unwrap();
    let o = melnikov(&["fit", "--family", "ruh2-neg", "--n", "2", "--input", &input, "--out", &report]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: FitReportDoc = serde_json::from_str(&read(&report)).unwrap();
    assert!(fit.relative_residual < 1e-10, "{}", fit.relative_residual);
}

#[test]
fn built_instance_feeds_zeros() {
    let dir = TempDir::new().unwrap();
    let spec = path(&dir, "inst.json");
    assert_eq!(melnikov(&["build", "--family", "WHs-case-1", "--n", "2", "--seed", "42", "--out", &spec]).status.code(), Some(0));
    let direct = melnikov(&["zeros", "--family", "WHs-case-1", "--n", "2", "--seed", "42"]);
    let from_file = melnikov(&["zeros", "--instance", &spec]);
    assert_eq!(direct.status.code(), Some(0));
    assert_eq!(stdout(&direct), stdout(&from_file));
    let count: usize = stdout(&direct).split(": ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!(count <= 5);

    let report = path(&dir, "zeros.csv");
    melnikov(&["zeros", "--instance", &spec, "--out", &report, "--no-header-timestamp"]);
    assert_eq!(read(&report).lines().count(), count + 1);
}

#[test]
fn unknown_family_is_an_error() {
    let o = melnikov(&["bound", "--family", "nope", "--n", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown family"));
}
