use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dna_inverse::forward::forward;
use dna_inverse::io::{self, EventRecord, ReportRecord, REPORT_VERSION};
use dna_inverse::profile;
use dna_inverse::solver::EventKind;
use dna_inverse::PulseModel;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dna-inverse"))
        .args(args)
        .env_remove("DNA_INVERSE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let p = path(dir, name);
    let mut args = vec!["simulate", "--out", s(&p)];
    args.extend_from_slice(extra);
    ok(&args);
    p
}

fn reads(p: &Path) -> Vec<io::ReadRecord> {
    io::parse_reads(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn reports(p: &Path) -> Vec<ReportRecord> {
    io::parse_reports(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a.jsonl", &["--count", "3", "--seed", "7", "--sigma", "0.05"]);
    let b = simulate(&dir, "b.jsonl", &["--count", "3", "--seed", "7", "--sigma", "0.05"]);
    let c = simulate(&dir, "c.jsonl", &["--count", "3", "--seed", "8", "--sigma", "0.05"]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 3);
}

#[test]
fn simulate_without_breakpoints_gives_lines() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "r.jsonl", &["--count", "5", "--C", "0", "--n", "120"]);
    for r in reads(&p) {
        let tau = r.tau_true.unwrap();
        let bp = profile::breakpoints(&tau, profile::default_tolerance(&tau)).unwrap();
        assert_eq!(bp.count(), 0, "{}", r.id);
    }
}

#[test]
fn simulate_without_noise_is_exact() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "r.jsonl", &["--count", "4", "--sigma", "0", "--n", "150", "--psi-max", "2"]);
    let m = PulseModel {
        psi_max: 2.0,
        ..PulseModel::default()
    };
    for r in reads(&p) {
        assert_eq!(r.z, forward(&m, r.tau_true.as_ref().unwrap()));
    }
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(run(&["simulate", "--sigma=-1"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--n", "100", "--C", "40"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--rise-rate=-1"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--in", "/nonexistent/reads"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_reads_report_the_line() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "bad.jsonl");
    std::fs::write(
        &p,
        "{\"id\":\"a\",\"dx\":0.1,\"z\":[0.1,0.2,0.3]}\n{\"id\":\"b\",\"dx\":0.1,\"z\":[0.1,\n",
    )
    .unwrap();
    let out = run(&["solve", "--in", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn solve_reports_recovery_and_ignores_thread_count() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "r.jsonl", &["--count", "6", "--n", "150", "--seed", "3", "--sigma", "0.05"]);
    let one = path(&dir, "one.jsonl");
    let four = path(&dir, "four.jsonl");
    let dump = path(&dir, "pre.jsonl");
    let common = ["solve", "--in", s(&p), "--lambda", "1e-3"];
    let mut a = common.to_vec();
    a.extend(["--threads", "1", "--out", s(&one), "--dump-preprocess", s(&dump)]);
    ok(&a);
    let mut b = common.to_vec();
    b.extend(["--threads", "4", "--out", s(&four)]);
    ok(&b);
    let (one, four) = (reports(&one), reports(&four));
    assert_eq!(one.len(), 6);
    for (x, y) in one.iter().zip(&four) {
        assert_eq!(x.without_timing(), y.without_timing());
        assert_eq!(x.solver, "dna-inverse");
        assert!(x.recovery.is_some());
    }
    let dumped = std::fs::read_to_string(dump).unwrap();
    assert_eq!(dumped.lines().count(), 6);
    let first: serde_json::Value = serde_json::from_str(dumped.lines().next().unwrap()).unwrap();
    assert!(first["candidates"].as_u64().unwrap() >= 1);
    assert_eq!(first["h"].as_array().unwrap().len(), 150);
}

#[test]
fn failed_reads_set_exit_code_one() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "short.jsonl");
    std::fs::write(&p, "{\"id\":\"tiny\",\"dx\":0.1,\"z\":[0.1,0.2,0.3,0.2]}\n").unwrap();
    let out_path = path(&dir, "rep.jsonl");
    let out = run(&["solve", "--in", s(&p), "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(1));
    let r = reports(&out_path);
    assert_eq!(r.len(), 1);
    assert!(r[0].error.as_deref().unwrap().contains("at least"));
}

#[test]
fn bench_tables() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "r.jsonl", &["--count", "3", "--n", "100", "--seed", "11", "--crossing-gap", "30"]);
    let both = ok(&[
        "bench", "--in", s(&p), "--lambda", "1e-4", "--gamma", "2e-4", "--no-smoothing",
        "--methods", "dna-inverse,pdps",
    ]);
    let text = String::from_utf8(both.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("method\treads\tfailed\tmean_ms\tmedian_ms"));
    assert!(rows[1].starts_with("dna-inverse\t3\t0"));
    assert!(rows[2].starts_with("pdps-adapted\t3\t0"));

    let per_read = path(&dir, "per_read.tsv");
    let single = ok(&[
        "bench", "--in", s(&p), "--lambda", "1e-4", "--no-smoothing", "--methods", "dna-inverse",
        "--per-read", s(&per_read),
    ]);
    let text = String::from_utf8(single.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().ends_with("\t1.000"));
    assert_eq!(std::fs::read_to_string(per_read).unwrap().lines().count(), 4);
}

fn report_with(events: Vec<EventRecord>) -> ReportRecord {
    ReportRecord {
        version: REPORT_VERSION,
        id: "r1".into(),
        solver: "dna-inverse".into(),
        dx: 0.5,
        error: None,
        objective: Some(0.0),
        d_star: vec![(0, 5)],
        tau_star: vec![3.0, 2.0, 1.0, 2.0, 3.0],
        breakpoints: vec![1, 3, 5],
        events,
        per_candidate: Vec::new(),
        wall_ms: 1.0,
        flags: Vec::new(),
        recovery: None,
    }
}

#[test]
fn events_export() {
    let dir = TempDir::new().unwrap();
    let empty = path(&dir, "empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = ok(&["events", "--in", s(&empty)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        "read_id\tkind\tindex\tposition_kb\tend_kb\ttime_min\tspeed_kb_per_min\tdirection\n"
    );

    let one = path(&dir, "one.jsonl");
    let origin = EventRecord {
        kind: EventKind::Origin,
        index: 3,
        end: None,
        time: 1.0,
        speed: None,
        direction: 0,
    };
    let text = io::emit_reports(&[report_with(vec![origin])]);
    assert_eq!(io::emit_reports(&io::parse_reports(&text).unwrap()), text);
    std::fs::write(&one, &text).unwrap();
    let table = path(&dir, "events.tsv");
    ok(&["events", "--in", s(&one), "--out", s(&table)]);
    let table = std::fs::read_to_string(table).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1], "r1\torigin\t3\t1\t\t1\t\t0");
}

#[test]
fn unknown_report_version_is_rejected() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "v2.jsonl");
    let text = io::emit_reports(&[report_with(Vec::new())]).replace("\"version\":1", "\"version\":2");
    std::fs::write(&p, text).unwrap();
    let out = run(&["events", "--in", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported report version 2"));
}

#[test]
fn model_block_round_trips() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "model.toml");
    std::fs::write(&p, "psi_max = 3.0\ndecay_rate = 0.5\n").unwrap();
    let out = ok(&["model", "--model", s(&p), "--tau0", "2.5"]);
    let m: PulseModel = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(
        m,
        PulseModel {
            tau0: 2.5,
            psi_max: 3.0,
            decay_rate: 0.5,
            ..PulseModel::default()
        }
    );
    std::fs::write(&p, "psi_maximum = 3.0\n").unwrap();
    assert_eq!(run(&["model", "--model", s(&p)]).status.code(), Some(2));
}
