mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn rrhoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrhoc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The fixture on a 20 s horizon and a single grid point, with `edits`
/// merged over the top-level keys.
fn write_config(dir: &Path, edits: Value) -> PathBuf {
    let text = std::fs::read_to_string(common::fixture_path()).unwrap();
    let mut config: Value = serde_json::from_str(&text).unwrap();
    config["schedule"]["horizon"] = json!(20.0);
    config["grid"] = json!({ "alphas": [1.0], "pi_fractions": [0.5], "epsilons": [0.1] });
    config["gamma_search"]["tolerance"] = json!(0.05);
    config["battery"]["count"] = json!(2);
    config["certification"]["lyapunov_stride"] = json!(25);
    config["sweep"]["steps"] = json!([0.2, 0.1]);
    for (k, v) in edits.as_object().unwrap() {
        config[k] = v.clone();
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn run_in(dir: &Path, command: &str, config: &Path) -> Output {
    let out = dir.join("out");
    rrhoc(&[
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let out = rrhoc(&["synthesize"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = rrhoc(&["synthesize", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&out), 2);
    let out = rrhoc(&["frobnicate"]);
    assert_eq!(code(&out), 2);

    let bad = write_config(
        dir.path(),
        json!({ "graph": { "node_count": 3, "edges": [[1, 2], [2, 3], [3, 3]] } }),
    );
    let out = run_in(dir.path(), "synthesize", &bad);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("graph.edges"), "{}", stderr(&out));

    let bad = write_config(
        dir.path(),
        json!({ "plant": { "a": [[0.05, 1.0], [0.0, -1.0]], "b2": [[1.0], [0.5]], "x0": [1.0] } }),
    );
    let out = run_in(dir.path(), "synthesize", &bad);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("plant.x0"), "{}", stderr(&out));

    let mut nodes =
        serde_json::from_str::<Value>(&std::fs::read_to_string(common::fixture_path()).unwrap())
            .unwrap()["nodes"]
            .clone();
    nodes[2]["c"] = json!([[0.5, 1.0, 0.0]]);
    let bad = write_config(dir.path(), json!({ "nodes": nodes }));
    let out = run_in(dir.path(), "synthesize", &bad);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nodes[2].c"), "{}", stderr(&out));

    // analyze without gains and without a prior synthesis
    let config = write_config(dir.path(), json!({}));
    let out = run_in(dir.path(), "analyze", &config);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("synthesize"), "{}", stderr(&out));
}

#[test]
fn infeasible_and_budget_exit_codes() {
    let dir = TempDir::new().unwrap();
    let tiny = write_config(dir.path(), json!({ "gamma": 0.01 }));
    let out = run_in(dir.path(), "synthesize", &tiny);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let starved = write_config(
        dir.path(),
        json!({ "gamma": 0.5, "budget": { "max_iter": 1 } }),
    );
    let out = run_in(dir.path(), "synthesize", &starved);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn pipeline_is_deterministic_and_consistent() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), json!({}));
    for command in ["synthesize", "analyze", "simulate", "certify"] {
        let out = run_in(dir.path(), command, &config);
        assert_eq!(code(&out), 0, "{command}: {}", stderr(&out));
    }
    let out = dir.path().join("out");
    let synthesis: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("synthesis.json")).unwrap())
            .unwrap();
    let gamma = synthesis["gamma"].as_f64().unwrap();
    assert!(synthesis["gamma_search"]["monotone"].as_bool().unwrap());
    assert_eq!(synthesis["gains"].as_array().unwrap().len(), 3);
    let analysis: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(analysis["status"], "feasible");
    let certification: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("certification.json")).unwrap())
            .unwrap();
    assert_eq!(certification["passed"], true);
    assert_eq!(certification["gamma"].as_f64().unwrap(), gamma);
    assert_eq!(certification["scenarios"].as_array().unwrap().len(), 3);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,x[0],x[1],xhat1[0]"));

    // a second run in a fresh directory reproduces every file byte for byte
    let again = TempDir::new().unwrap();
    let config2 = write_config(again.path(), json!({}));
    for command in ["synthesize", "analyze", "simulate", "certify"] {
        assert_eq!(code(&run_in(again.path(), command, &config2)), 0);
    }
    for file in [
        "synthesis.json",
        "analysis.json",
        "trace.csv",
        "certification.json",
    ] {
        let a = std::fs::read(out.join(file)).unwrap();
        let b = std::fs::read(again.path().join("out").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }

    // the same result with L negated fails analysis and certification
    synthesis_with_flipped_l(
        &out.join("synthesis.json"),
        &dir.path().join("flipped.json"),
    );
    let flipped = write_config(
        dir.path(),
        json!({ "gains": "flipped.json", "result": "flipped.json" }),
    );
    let out = run_in(dir.path(), "analyze", &flipped);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = run_in(dir.path(), "certify", &flipped);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("certification failed"));
}

fn synthesis_with_flipped_l(src: &Path, dst: &Path) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(src).unwrap()).unwrap();
    for g in v["gains"].as_array_mut().unwrap() {
        for row in g["l"].as_array_mut().unwrap() {
            for x in row.as_array_mut().unwrap() {
                *x = json!(-x.as_f64().unwrap());
            }
        }
    }
    std::fs::write(dst, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn sweep_writes_one_row_per_step() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), json!({}));
    let out = run_in(dir.path(), "sweep", &config);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(
        rows[0],
        "h,tau_max,gamma_min,gamma_lo,probes,monotone,alpha,pi_fraction,epsilon,status"
    );
    assert_eq!(rows.len(), 3);
    let gamma = |row: &str| row.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    assert!(rows[1].starts_with("0.2,0.2,") && rows[2].starts_with("0.1,0.1,"));
    assert!(gamma(rows[2]) <= gamma(rows[1]) * 1.01 + 0.05);
    assert!(rows[1..].iter().all(|r| r.ends_with(",feasible")));
}
