use std::path::PathBuf;
use std::process::Command;

use hsgd_io::cli::{run_cli, FAILED, OK, USAGE};
use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).display().to_string()
}

fn hsgd(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli(std::iter::once("hsgd").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn validate_reports_name_and_hash() {
    let (code, out, _) = hsgd(&["validate", &fixture("demo3.hsgd")]);
    assert_eq!(code, OK);
    let last = out.lines().last().unwrap();
    let parts: Vec<&str> = last.split(' ').collect();
    assert_eq!(parts[..2], ["ok", "demo3"]);
    assert_eq!(parts[2].len(), 64);
}

#[test]
fn invalid_model_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.hsgd");
    std::fs::write(&path, "model bad\ndiagram D\n  boundaries 0 2\nend\n").unwrap();
    let (code, out, _) = hsgd(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, FAILED);
    assert!(out.contains("E_MISSING"), "{out}");
    let (code, _, err) = hsgd(&["run", path.to_str().unwrap(), "--scenario", "s"]);
    assert_eq!(code, FAILED);
    assert!(err.contains("bad.hsgd:"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(hsgd(&["frobnicate"]).0, USAGE);
    assert_eq!(hsgd(&["validate", "/no/such/file.hsgd"]).0, USAGE);
    assert_eq!(hsgd(&["run", &fixture("demo3.hsgd"), "--scenario", "nope"]).0, USAGE);
    assert_eq!(hsgd(&["inertial", &fixture("demo3.hsgd"), "--horizon", "0"]).0, USAGE);
    assert_eq!(hsgd(&["compare"]).0, USAGE);
    assert_eq!(hsgd(&["--help"]).0, OK);
}

#[test]
fn run_writes_a_complete_report() {
    let (code, out, _) = hsgd(&["run", &fixture("demo3.hsgd"), "--scenario", "complete"]);
    assert_eq!(code, OK);
    let doc = json(&out);
    assert_eq!(doc["report"]["complete"], true);
    assert_eq!(doc["report"]["goal_times"]["D"], 3);
    assert!(doc["engine_version"].as_str().unwrap().starts_with("hsgd "));
    assert_eq!(doc["model_hash"].as_str().unwrap().len(), 64);
    assert!(doc["verdict"].is_null());
}

#[test]
fn partial_criteria_drive_the_exit_code() {
    let (code, out, _) = hsgd(&["run", &fixture("demo3.hsgd"), "--scenario", "checked"]);
    assert_eq!(code, OK);
    assert_eq!(json(&out)["verdict"], "confirmed");
    let (code, out, err) = hsgd(&["run", &fixture("demo3.hsgd"), "--scenario", "stalled"]);
    assert_eq!(code, FAILED);
    assert_eq!(json(&out)["verdict"]["refuted"]["support"], "S2");
    assert!(err.contains("refuted"));
}

#[test]
fn inertial_run_moves_nothing_forward() {
    let (code, out, _) = hsgd(&["inertial", &fixture("demo3.hsgd"), "--horizon", "4"]);
    assert_eq!(code, OK);
    let doc = json(&out);
    assert_eq!(doc["report"]["scenario"], "inertial");
    let eta = &doc["trajectory"]["diagrams"]["D"]["dynamics"]["eta"];
    for arc in ["a01", "a12"] {
        assert!(eta[arc].as_array().unwrap().iter().all(|n| n == 0), "{arc}");
    }
}

#[test]
fn plan_lists_the_pareto_frontier() {
    let (code, out, _) = hsgd(&["plan", &fixture("demo3.hsgd"), "--from", "S0", "--to", "S2"]);
    assert_eq!(code, OK);
    let doc = json(&out);
    let mut costs: Vec<(String, u64)> = doc["plans"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["total_resource"].to_string(), p["total_time"].as_u64().unwrap()))
        .collect();
    costs.sort();
    assert_eq!(costs, [("5.0".to_string(), 3), ("6.0".to_string(), 2)]);

    let (code, out, _) = hsgd(&["plan", &fixture("demo3.hsgd"), "--from", "S0", "--to", "S2", "--max-time", "1"]);
    assert_eq!(code, OK);
    assert!(json(&out)["plans"].as_array().unwrap().is_empty());

    let (code, _, err) = hsgd(&["plan", &fixture("demo3.hsgd"), "--from", "S0", "--to", "S9"]);
    assert_eq!(code, FAILED);
    assert!(err.contains("S9"));

    assert_eq!(hsgd(&["plan", &fixture("parent-child.hsgd"), "--from", "S0", "--to", "S1"]).0, USAGE);
}

#[test]
fn ingest_prints_counted_dynamics() {
    let (code, out, _) = hsgd(&["ingest", &fixture("demo3.hsgd"), &fixture("demo3.csv")]);
    assert_eq!(code, OK);
    let doc = json(&out);
    assert_eq!(doc["ingest"]["dynamics"]["D"]["eta"]["a12"][4], 4);
    assert!(doc["ingest"]["anomalies"].as_array().unwrap().is_empty());
}

#[test]
fn compare_ranks_saved_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for scenario in ["complete", "stalled"] {
        let path = dir.path().join(format!("{scenario}.json"));
        let (_, _, _) = hsgd(&["run", &fixture("demo3.hsgd"), "--scenario", scenario, "--out", path.to_str().unwrap()]);
        paths.push(path.display().to_string());
    }
    let args: Vec<&str> = std::iter::once("compare").chain(paths.iter().map(String::as_str)).collect();
    let (code, out, _) = hsgd(&args);
    assert_eq!(code, OK, "{out}");
    let doc = json(&out);
    assert_eq!(doc["ranking"]["order"][0]["scenario"], "complete");
    assert_eq!(doc["ranking"]["order"][0]["front"], 0);
}

#[test]
fn binary_output_is_byte_identical() {
    let bin = env!("CARGO_BIN_EXE_hsgd");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..3 {
        let path = dir.path().join(format!("r{i}.json"));
        let status = Command::new(bin)
            .args(["run", &fixture("demo3.hsgd"), "--scenario", "complete", "--out"])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let refuted = Command::new(bin).args(["run", &fixture("demo3.hsgd"), "--scenario", "stalled"]).output().unwrap();
    assert_eq!(refuted.status.code(), Some(FAILED));
}
