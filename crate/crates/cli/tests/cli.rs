use std::path::Path;
use std::process::{Command, Output};

use abnodal_core::trace::BoundaryTrace;

fn abnodal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abnodal")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn list_names_every_builtin() {
    let out = abnodal(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["symmetric-triple", "bessel-spectrum", "partition-vs-nodal", "solver-order"] {
        assert!(text.contains(id), "{id} missing from\n{text}");
    }
}

#[test]
fn trace_validate_accepts_tables_and_rejects_overlaps() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    let table = BoundaryTrace::symmetric().to_table(256);
    std::fs::write(&good, &table).unwrap();
    let out = abnodal(&["trace-validate", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["valid"], true);
    assert_eq!(v["sign_changes"], 3);

    // Give arc 2 mass wherever arc 1 is present.
    let mut lines: Vec<String> = table.lines().map(String::from).collect();
    let row = lines.iter().position(|l| {
        let v: Vec<f64> = l.split(|c: char| c == ',' || c.is_whitespace()).filter_map(|s| s.parse().ok()).collect();
        v.len() == 7 && v[1] > 0.0
    });
    let row = row.expect("arc 1 has a positive sample");
    let mut v: Vec<String> = lines[row].split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(String::from).collect();
    v[2] = "0.5".into();
    lines[row] = v.join(",");
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let out = abnodal(&["trace-validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["valid"], false);
}

#[test]
fn run_builtin_writes_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = abnodal(&["run", "circulation-quantization", "--grid", "coarse", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let base = dir.path().join("circulation-quantization");
    assert!(base.join("report.json").is_file());
    assert!(base.join("scenario.txt").is_file());
}

#[test]
fn run_reads_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("mine.txt");
    std::fs::write(&file, "id = mine\ntrace = symmetric\npotential = const:0\npipeline = circulation\n").unwrap();
    let out = abnodal(&["run", file.to_str().unwrap(), "--grid", "coarse", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(Path::new(&dir.path().join("mine").join("report.json")).is_file());
}

#[test]
fn solve_and_svg_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = abnodal(&["solve", "--grid", "coarse", "--pole", "0.1,-0.05", "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let energy = v["energy"].as_f64().expect("energy field");
    assert!(energy.is_finite() && energy > 0.0);
    assert!(dir.path().join("field.csv").is_file());

    let out = abnodal(&["nodal-svg", "--grid", "coarse", "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("nodal.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn bad_arguments_fail() {
    assert_ne!(abnodal(&["run", "no-such-scenario"]).status.code(), Some(0));
    assert_ne!(abnodal(&["solve", "--pole", "2,0", "--grid", "coarse"]).status.code(), Some(0));
    assert_ne!(abnodal(&["solve", "--grid", "enormous"]).status.code(), Some(0));
}
