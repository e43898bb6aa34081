use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use kdpp::data::write_f32bin;
use kdpp::{Points, RandomStream};
use serde_json::Value;

fn kdpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdpp")).args(args).output().unwrap()
}

fn tiny_points() -> Points<f64> {
    let mut rng = RandomStream::new(3);
    Points::new(8, 2, (0..16).map(|_| rng.normal()).collect()).unwrap()
}

fn tiny_csv(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.csv");
    kdpp::data::write_csv(&path, &tiny_points(), false).unwrap();
    path
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn five_samples_of_two_items() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tiny_csv(dir.path());
    let out = kdpp(&[
        "sample", "--data", csv.to_str().unwrap(), "--kernel", "rbf", "--sigma", "1", "--k", "2", "--samples", "5", "--seed", "7",
    ]);
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    let reports = doc["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 5);
    for r in reports {
        assert_eq!(r["schema_version"], 1);
        let s: Vec<u64> = r["sample"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert_eq!(s.len(), 2);
        assert!(s[0] < s[1] && s[1] < 8);
        let beta = r["beta"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&beta));
        assert!(r["timings"]["bless_secs"].as_f64().unwrap() >= 0.0);
        assert_eq!(r["config"]["n"], 8);
    }
    assert_eq!(doc["aggregate"]["samples"], 5);
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tiny_csv(dir.path());
    let args = ["sample", "--data", csv.to_str().unwrap(), "--k", "3", "--samples", "4", "--seed", "7", "--deterministic"];
    let a = kdpp(&args);
    let b = kdpp(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(json(&a)["reports"][0]["timings"].is_null());
}

#[test]
fn csv_output_has_an_aggregate_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tiny_csv(dir.path());
    let out = kdpp(&["sample", "--data", csv.to_str().unwrap(), "--k", "2", "--samples", "3", "--output", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("sample_index,n,k,alpha_hat"));
    assert!(lines[4].starts_with("aggregate,8,2,"));
}

#[test]
fn binary_input_and_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pts.bin");
    write_f32bin(&path, &tiny_points()).unwrap();
    let out = kdpp(&[
        "sample", "--data", path.to_str().unwrap(), "--format", "f32bin", "--k", "2", "--precision", "f32", "--kernel", "cosine",
    ]);
    let doc = json(&out);
    assert_eq!(doc["reports"][0]["sample"].as_array().unwrap().len(), 2);
}

#[test]
fn synthetic_input_with_fixed_r() {
    let out = kdpp(&["sample", "--synthetic", "500", "--sigma", "2", "--k", "4", "--r", "3"]);
    let doc = json(&out);
    assert_eq!(doc["reports"][0]["r"], 3.0);
    assert_eq!(doc["reports"][0]["sample"].as_array().unwrap().len(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = tiny_csv(dir.path());
    let csv = csv.to_str().unwrap();
    assert_eq!(kdpp(&["sample", "--data", csv, "--k", "2", "--bogus"]).status.code(), Some(2));
    assert_eq!(kdpp(&["sample", "--data", csv]).status.code(), Some(2));
    assert_eq!(kdpp(&["sample", "--data", csv, "--k", "2", "--r", "-1"]).status.code(), Some(2));
    assert_eq!(kdpp(&["sample", "--data", csv, "--k", "2", "--sigma", "0"]).status.code(), Some(2));
    assert_eq!(kdpp(&["validate", "--n", "20"]).status.code(), Some(2));

    assert_eq!(kdpp(&["sample", "--data", "/nonexistent/x.csv", "--k", "2"]).status.code(), Some(3));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    assert_eq!(kdpp(&["sample", "--data", bad.to_str().unwrap(), "--k", "1"]).status.code(), Some(3));

    let out = kdpp(&["sample", "--data", csv, "--k", "9"]);
    assert_eq!(out.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(err["error"].as_str().unwrap().contains("infeasible"));
    assert!(err.get("trace").is_some());
}

#[test]
fn bench_grid_has_one_row_per_size() {
    let out = kdpp(&["bench", "--n-grid", "1000,2000", "--reps", "3", "--k", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["n", "mean_runtime", "ci95", "beta", "m", "alpha_hat"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for (row, n) in rows.iter().zip(["1000", "2000"]) {
        assert_eq!(&row[0], n);
        assert!(row[2].parse::<f64>().unwrap() >= 0.0);
        let beta: f64 = row[3].parse().unwrap();
        assert!(beta > 0.0 && beta <= 1.0);
    }
}

#[test]
fn quick_validation_passes_within_a_minute() {
    let clock = Instant::now();
    let out = kdpp(&["validate", "--quick"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
    assert!(clock.elapsed() < Duration::from_secs(60));
}
