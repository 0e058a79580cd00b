use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const WORLD: &str = "\
family = pbm
num_items = 4
positions = 2
seed = 11
attraction.* = 0.8,0.5,0.3,0.1
examination.* = 1,0.5
drift.attraction.* = 0.4,0.5,0.6,0.7
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_click-ope"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    world: PathBuf,
    log: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let world = dir.path().join("world.cfg");
    fs::write(&world, WORLD).unwrap();
    let log = dir.path().join("log.tsv");
    let out = run(&[
        "simulate", "--world", s(&world), "--records", "6000", "--days", "5", "--out", s(&log),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Fixture { dir, world, log }
}

#[test]
fn simulate_is_reproducible_and_worker_independent() {
    let f = fixture();
    let again = f.dir.path().join("again.tsv");
    let out = run(&[
        "--workers", "4", "simulate", "--world", s(&f.world), "--records", "6000", "--days", "5", "--out", s(&again),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(&f.log).unwrap(), fs::read(&again).unwrap());
    assert_eq!(fs::read_to_string(&f.log).unwrap().lines().count(), 6000);
}

#[test]
fn reports_are_byte_identical_across_worker_counts() {
    let f = fixture();
    for sub in [
        vec!["evaluate", "--estimator", "pbm", "--clip", "5", "--theta", "dcg"],
        vec!["sweep", "--clip", "0,1,10,inf"],
    ] {
        let mut outputs = Vec::new();
        for workers in ["1", "4", "4"] {
            let mut args = vec!["--workers", workers];
            args.extend(&sub);
            args.push(s(&f.log));
            let out = run(&args);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            outputs.push(out.stdout);
        }
        assert!(!outputs[0].is_empty());
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[1], outputs[2]);
    }
}

#[test]
fn sweep_table_has_one_row_per_family_and_clip() {
    let f = fixture();
    let table = f.dir.path().join("sweep.tsv");
    let out = run(&[
        "sweep", s(&f.log), "--estimator", "ip,rctr", "--clip", "0,inf", "--world", s(&f.world), "--out", s(&table),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "family\tM\trmse\tclipped_fraction\tdays");
    assert_eq!(lines.len(), 5);
    let rctr: Vec<&str> = lines.iter().filter(|l| l.starts_with("rctr")).map(|l| l.split('\t').nth(2).unwrap()).collect();
    assert_eq!(rctr[0], rctr[1]);
}

#[test]
fn optimize_writes_a_readable_policy_and_certificate() {
    let f = fixture();
    for estimator in ["list", "ip"] {
        let policy = f.dir.path().join(format!("{estimator}.policy"));
        let cert = f.dir.path().join(format!("{estimator}.cert"));
        let out = run(&[
            "optimize", s(&f.log), "--estimator", estimator, "--clip", "2", "--delta", "0.1",
            "--out", s(&policy), "--certificate", s(&cert),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(&policy).unwrap();
        let total: f64 = text.lines().map(|l| l.split('\t').nth(2).unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{estimator}: mass {total}");
        let cert = fs::read_to_string(&cert).unwrap();
        assert!(cert.contains("objective\t") && cert.contains("hoeffding_term\t"), "{cert}");
    }
}

#[test]
fn diagnose_reports_bias_terms() {
    let f = fixture();
    let pi = f.dir.path().join("pi.policy");
    let h = f.dir.path().join("h.policy");
    fs::write(&pi, "0\t0,1\t0.5\n0\t1,0\t0.25\n0\t2,3\t0.25\n").unwrap();
    fs::write(&h, "0\t0,1\t1\n").unwrap();
    let out = run(&[
        "diagnose", "--world", s(&f.world), "--pi", s(&pi), "--h", s(&h), "--estimator", "list", "--clip", "1.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["expected_estimate\t", "true_value\t", "f_term\t", "g_term\t", "unclipped_class_member\tfalse"] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let f = fixture();
    // Usage errors.
    assert_eq!(run(&["evaluate", s(&f.log)]).status.code(), Some(1));
    assert_eq!(run(&["evaluate", s(&f.log), "--estimator", "ip", "--clip", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["evaluate", s(&f.log), "--estimator", "ip", "--format", "yandex"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // Data errors.
    let missing = f.dir.path().join("missing.tsv");
    assert_eq!(run(&["evaluate", s(&missing), "--estimator", "ip"]).status.code(), Some(2));
    let bad = f.dir.path().join("bad.tsv");
    fs::write(&bad, "1\t0\t0\t0,1\t1\n").unwrap();
    let out = run(&["evaluate", s(&bad), "--estimator", "ip"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":1:"));
    // Capacity.
    assert_eq!(
        run(&["simulate", "--world", s(&f.world), "--records", "0"]).status.code(),
        Some(3)
    );
}

#[test]
fn yandex_logs_are_read_with_a_position_cutoff() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("clicks.txt");
    let mut text = String::new();
    for (sid, day) in [(1, 1), (2, 1), (3, 2), (4, 2)] {
        text.push_str(&format!("{sid}\tM\t{day}\t7\n"));
        text.push_str(&format!("{sid}\t0\tQ\t0\t42\t1,2\t10,1\t11,1\t12,1\n"));
        text.push_str(&format!("{sid}\t5\tC\t0\t{}\n", 10 + sid % 2));
    }
    fs::write(&log, text).unwrap();
    let out = run(&["evaluate", s(&log), "--format", "yandex", "--positions", "2", "--estimator", "rctr"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = report.lines().filter(|l| l.starts_with("42\t")).collect();
    assert_eq!(rows.len(), 2, "{report}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("records 4"));
}
