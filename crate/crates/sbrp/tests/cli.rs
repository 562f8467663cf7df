use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use sbrp::lp::read_lp;

fn sbrp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbrp")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sbrp(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn generate_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--n", "400", "--alpha", "1", "--beta", "1", "--seed", "7", "-o", "inst.json"]);
    let inst = json(&std::fs::read_to_string(dir.path().join("inst.json")).unwrap());
    assert_eq!(inst["students"].as_array().unwrap().len(), 400);
    assert_eq!(inst["provenance"]["seed"], 7);
    assert_eq!(inst["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    let report = json(&ok(dir.path(), &["validate", "inst.json"]));
    assert_eq!(report["ok"], true);
}

#[test]
fn corrupted_files_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--n", "20", "--seed", "2", "-o", "inst.json"]);
    let text = std::fs::read_to_string(dir.path().join("inst.json")).unwrap();
    std::fs::write(dir.path().join("cut.json"), &text[..text.len() / 2]).unwrap();
    let out = sbrp(dir.path(), &["validate", "cut.json"]);
    assert_eq!(out.status.code(), Some(2));
    let diag = json(String::from_utf8_lossy(&out.stderr).trim());
    assert_eq!(diag["error"], "parse");
    assert!(diag["line"].as_u64().unwrap() > 1);

    let bad = text.replacen("\"walk_limit\": 0.25", "\"walk_limit\": -1.0", 1);
    assert_ne!(bad, text);
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = sbrp(dir.path(), &["validate", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(String::from_utf8_lossy(&out.stderr).trim())["error"], "invalid");

    let out = sbrp(dir.path(), &["validate", "inst.json", "--set", "bus.colour=red"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_outputs_feed_the_next_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--n", "60", "--seed", "5", "-o", "inst.json"]);
    ok(d, &["allocate", "inst.json", "-o", "alloc.json"]);
    ok(d, &["route", "inst.json", "--allocation", "alloc.json", "-o", "plan.json"]);
    let report = json(&ok(d, &["validate", "inst.json", "--allocation", "alloc.json", "--plan", "plan.json"]));
    let plan = json(&std::fs::read_to_string(d.join("plan.json")).unwrap());
    assert_eq!(report["buses"], plan["bus_count"]);
    let alloc = json(&std::fs::read_to_string(d.join("alloc.json")).unwrap());
    assert_eq!(report["open_stops"], alloc["open_count"]);
    assert_eq!(alloc["assignments"].as_array().unwrap().len(), 60);
}

#[test]
fn milp_export_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--n", "12", "--seed", "9", "-o", "inst.json"]);
    ok(d, &["export-milp", "inst.json", "-o", "model.lp"]);
    let text = std::fs::read_to_string(d.join("model.lp")).unwrap();
    assert!(text.starts_with("\\ W = "));
    let lp = read_lp(&d.join("model.lp"), &text).unwrap();
    assert!(lp.comments.iter().any(|c| c.starts_with("config_hash = ")));
    assert!(lp.constraints.iter().any(|c| c.name == "mo4_022"));
    assert_eq!(sbrp::lp::write_lp(&lp), text);
}

#[test]
fn toy_sweep_is_fast_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--n", "10", "--seed", "4", "-o", "toy.json"]);
    let start = Instant::now();
    ok(d, &["sweep", "toy.json", "--replicas", "20", "--quiet", "-o", "full.csv", "--plot-data", "plot.dat"]);
    assert!(start.elapsed() < Duration::from_secs(5));
    let full = std::fs::read_to_string(d.join("full.csv")).unwrap();
    assert_eq!(full.lines().count(), 3 + 11);
    assert!(full.lines().nth(2).unwrap().starts_with("tau,replicas,mean_savings"));
    let plot = std::fs::read_to_string(d.join("plot.dat")).unwrap();
    assert_eq!(plot.matches("\n\n\n").count(), 4);

    // Interrupted run: keep the first four levels, then resume.
    let partial: Vec<&str> = full.lines().take(3 + 4).collect();
    std::fs::write(d.join("part.csv"), partial.join("\n") + "\n").unwrap();
    ok(d, &["sweep", "toy.json", "--replicas", "20", "--quiet", "-o", "part.csv", "--resume"]);
    assert_eq!(std::fs::read_to_string(d.join("part.csv")).unwrap(), full);

    let out = sbrp(d, &["sweep", "toy.json", "--replicas", "20", "--quiet", "-o", "part.csv", "--resume", "--seed", "8"]);
    assert_eq!(out.status.code(), Some(2));
}
