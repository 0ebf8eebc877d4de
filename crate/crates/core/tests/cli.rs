mod common;

use std::path::Path;
use std::process::{Command, Output};

use blackout_lens::report::ReportDocument;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blackout-lens"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn diagnose(out: &Path, factors: &str, mode: &str) -> Output {
    let case = common::case_path("case30.m");
    run(&[
        "diagnose",
        "--case",
        case.to_str().unwrap(),
        "--factors",
        factors,
        "--mode",
        mode,
        "--out",
        out.to_str().unwrap(),
    ])
}

fn strip_wall_clock(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("wall_clock_seconds");
            m.values_mut().for_each(strip_wall_clock);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn missing_case_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "diagnose",
        "--case",
        "/nonexistent/case.m",
        "--factors",
        "1.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_factor_range_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = diagnose(dir.path(), "1.0:2.0:0", "both");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn feasible_sweep_reports_empty_supports() {
    let dir = tempfile::tempdir().unwrap();
    let out = diagnose(dir.path(), "1.0:1.0:0.1", "both");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = ReportDocument::read(&dir.path().join("report.json")).unwrap();
    assert_eq!(doc.modes.len(), 2);
    for m in doc.modes.values() {
        assert_eq!(m.scenarios.len(), 1);
        assert!(m.scenarios[0].support.is_empty());
    }
    let loc = read_csv(&dir.path().join("multi_period/location_persistency.csv"));
    assert!(loc.is_empty());
    let set = read_csv(&dir.path().join("multi_period/set_persistency.csv"));
    assert_eq!(set, vec![vec!["1", "0", "0", "100.0"]]);
}

#[test]
fn case30_sweep_report_and_derived_views() {
    let dir = tempfile::tempdir().unwrap();
    let out = diagnose(dir.path(), "3.8:4.7:0.1", "both");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = dir.path().join("report.json");
    let doc = ReportDocument::read(&report).unwrap();
    assert_eq!(doc.metadata.factors.len(), 10);
    assert_eq!(doc.metadata.config_hash.len(), 64);
    for m in doc.modes.values() {
        assert_eq!(m.scenarios.len(), 10);
        assert!(m.complete);
        // Stored metrics agree with the per-scenario records.
        assert_eq!(m.recompute_persistency(), m.persistency);
        for s in &m.scenarios {
            for mag in &s.magnitudes {
                assert!(mag.mva_equivalent > 0.0);
            }
        }
    }
    assert_eq!(doc.comparison.as_ref().unwrap().len(), 10);

    // CSV views agree with the JSON.
    let metrics_dir = dir.path().join("metrics");
    let out = run(&[
        "metrics",
        "--report",
        report.to_str().unwrap(),
        "--out",
        metrics_dir.to_str().unwrap(),
        "--mode",
        "baseline",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let bl = &doc.modes["baseline"];
    let set = read_csv(&metrics_dir.join("set_persistency.csv"));
    assert_eq!(set.len(), 10);
    for (row, t) in set.iter().zip(0..) {
        assert_eq!(row[3].parse::<f64>().unwrap(), bl.persistency.set_persistency[t]);
    }
    let comp = read_csv(&metrics_dir.join("compensation.csv"));
    for (row, s) in comp.iter().zip(&bl.scenarios) {
        assert_eq!(row[1].parse::<f64>().unwrap(), s.total_l1);
        assert_eq!(row[2].parse::<usize>().unwrap(), s.support.len());
    }
    let loc = read_csv(&metrics_dir.join("location_persistency.csv"));
    assert_eq!(loc.len(), bl.persistency.locations.len());

    for fig in ["trajectory", "set-persistency", "sparsity-compare", "runtime"] {
        let path = dir.path().join(format!("{fig}.plot.csv"));
        let out = run(&[
            "plot-data",
            "--report",
            report.to_str().unwrap(),
            "--figure",
            fig,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{fig}");
        assert!(!read_csv(&path).is_empty(), "{fig}");
    }
    let compare = read_csv(&dir.path().join("sparsity-compare.plot.csv"));
    assert_eq!(compare.len(), 20);
    let runtime = read_csv(&dir.path().join("runtime.plot.csv"));
    assert_eq!(runtime.len(), 20);
}

#[test]
fn reports_are_deterministic_apart_from_wall_clock() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(diagnose(d.path(), "4.0,4.3,4.6", "both").status.code(), Some(0));
    }
    let load = |d: &Path| {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        strip_wall_clock(&mut v);
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(load(a.path()), load(b.path()));
}

#[test]
fn single_mode_report_refuses_comparison() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(diagnose(dir.path(), "4.0,4.1", "multi-period").status.code(), Some(0));
    let report = dir.path().join("report.json");
    let out = run(&[
        "plot-data",
        "--report",
        report.to_str().unwrap(),
        "--figure",
        "sparsity-compare",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("baseline"));
}

#[test]
fn schema_drift_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(diagnose(dir.path(), "1.0", "baseline").status.code(), Some(0));
    let report = dir.path().join("report.json");
    let text = std::fs::read_to_string(&report).unwrap();
    std::fs::write(&report, text.replacen("\"schema_version\": 1", "\"schema_version\": 99", 1)).unwrap();
    let out = run(&["metrics", "--report", report.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn oracle_subcommand_on_a_tiny_case() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.m");
    std::fs::write(
        &path,
        "function mpc = tiny\nmpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;\n2 1 140 20 0 0 1 1 0 1 1 1.1 0.9;\n];\n\
mpc.gen = [\n1 0 0 100 -100 1 100 1 200 0;\n];\nmpc.branch = [\n1 2 0 0.5 0 0 0 0 0 0 1 -360 360;\n];\n",
    )
    .unwrap();
    let out = run(&["oracle", "--case", path.to_str().unwrap(), "--max-card", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["min_cardinality"], 1);
    assert_eq!(v["witnesses"][0]["support"], serde_json::json!([2]));
}
