use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cwdyn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwdyn"))
        .args(args)
        .current_dir(dir)
        .env_remove("CWDYN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn records(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn body(path: &Path, kind: &str) -> Value {
    records(path).into_iter().find(|r| r["kind"] == kind).unwrap_or_else(|| panic!("no {kind} record"))
}

#[test]
fn singleton_metric_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), r#"{"chart":"torus","vertices":[[0.2,0.3]],"mark_p":0,"mark_q":0}"#).unwrap();
    let out = cwdyn(dir.path(), &["metric", "--continuum", "s.json", "--out", "m.jsonl"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&dir.path().join("m.jsonl"));
    assert_eq!(recs[0]["kind"], "header");
    let m = body(&dir.path().join("m.jsonl"), "metric");
    assert_eq!(m["data"]["D"], 0.0);
    assert_eq!(m["data"]["P"], 0.0);
    assert_eq!(m["data"]["N"], "infinite");
    assert_eq!(m["constants"]["n0"], 3);
}

#[test]
fn periodic_point_is_found_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = cwdyn(dir.path(), &["periodic", "--p", "0.2,0.4", "--out", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = body(&dir.path().join("p.jsonl"), "periodic");
    assert_eq!(rec["data"]["run"]["q"]["coords"], serde_json::json!([0.2, 0.4]));
    assert_eq!(rec["data"]["run"]["converged"], true);
    assert_eq!(body(&dir.path().join("p.jsonl"), "periodic-check")["data"]["ok"], true);
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seed = 3\n\n[model]\nshape = \"torus\"\n").unwrap();
    let out = cwdyn(dir.path(), &["--config", "bad.toml", "calibrate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains("shape"), "{err}");

    let out = cwdyn(dir.path(), &["--model", "klein", "calibrate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cwdyn(dir.path(), &["metric"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_goes_to_the_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = cwdyn(dir.path(), &["--out-dir", "runs", "calibrate"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("runs/calibrate.jsonl").exists());
}

#[test]
fn bodies_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = cwdyn(dir.path(), &["--seed", "3", "holonomy-probe", "--samples", "40", "--out", name]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        records(&dir.path().join(name))
    };
    let (a, b) = (run("a.jsonl"), run("b.jsonl"));
    assert_eq!(a[0]["config_hash"], b[0]["config_hash"]);
    assert_eq!(a[1..], b[1..]);

    let out = cwdyn(dir.path(), &["--seed", "4", "holonomy-probe", "--samples", "40", "--out", "c.jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(records(&dir.path().join("c.jsonl"))[0]["config_hash"], a[0]["config_hash"]);
}
