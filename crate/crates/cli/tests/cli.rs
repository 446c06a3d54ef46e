use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwlab")).args(args).output().expect("binary runs")
}

fn stem(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn moment_density_writes_the_heat_kernel_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = stem(dir.path(), "md");
    let o = dwlab(&["moment-density", "--n", "1", "--mu", "0,0@1", "--t", "1", "--xs", "0,0", "--d", "2", "--output", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(format!("{out}.json")).unwrap()).unwrap();
    let value = manifest["estimates"][0]["value"].as_f64().unwrap();
    assert!((value - 0.15915494).abs() < 5e-9, "{value}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = stem(dir.path(), name);
        let o = dwlab(&[
            "simulate", "--mu", "0,0@1", "--t", "1", "--N", "500", "--reps", "20", "--emit", "particles", "--seed", "42",
            "--workers", "1", "--output", &out,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(format!("{out}.csv")).unwrap());
    }
    assert!(!files[0].is_empty());
    assert_eq!(files[0], files[1]);
}

#[test]
fn tree_sample_topologies_are_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let out = stem(dir.path(), "trees");
    let reps = 30_000u64;
    let o = dwlab(&["tree-sample", "--n", "3", "--reps", &reps.to_string(), "--method", "sideways", "--seed", "3", "--output", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(format!("{out}.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "rep");
    assert_eq!(&headers[1], "topology_id");
    assert_eq!(headers.len(), 2 + 2 + 3 * 2);
    let mut counts: HashMap<String, u64> = HashMap::new();
    for row in reader.records() {
        *counts.entry(row.unwrap()[1].to_string()).or_default() += 1;
    }
    assert_eq!(counts.len(), 3);
    let sigma = (2.0f64 / 9.0).sqrt() / (reps as f64).sqrt();
    for c in counts.values() {
        assert!((*c as f64 / reps as f64 - 1.0 / 3.0).abs() < 4.0 * sigma);
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dwlab(&["moment-density", "--n", "1", "--mu", "0,0@1", "--t", "-1", "--xs", "0,0", "--d", "2", "--output", &stem(dir.path(), "bad")]);
    assert_eq!(bad.status.code(), Some(2));
    let starved = dwlab(&[
        "hitting", "--mu", "0,0,0@1", "--t", "1", "--N", "10000", "--centers", "2.5,0,0", "--eps", "0.02", "--reps", "50",
        "--output", &stem(dir.path(), "starved"),
    ]);
    assert_eq!(starved.status.code(), Some(3));
    assert!(Path::new(&format!("{}.json", stem(dir.path(), "starved"))).exists());
    let ok = dwlab(&[
        "hitting", "--mu", "0,0,0@1", "--t", "1", "--N", "10000", "--centers", "0.3,0,0", "--eps", "0.2", "--reps", "2000",
        "--output", &stem(dir.path(), "ok"),
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
}

#[test]
fn config_kind_must_match_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"kind":"hitting","params":{},"output_path":"x"}"#).unwrap();
    let o = dwlab(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
