use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn athres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_athres"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_items(path: &Path, ids: std::ops::Range<u32>) {
    let mut text = String::new();
    for i in ids {
        text.push_str(&format!("{{\"id\":{i},\"w\":{},\"x\":{}}}\n", 1 + i % 5, i));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn sample_estimate_merge_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let a_items = dir.path().join("a.jsonl");
    let b_items = dir.path().join("b.jsonl");
    write_items(&a_items, 0..200);
    write_items(&b_items, 200..400);
    let a_env = dir.path().join("a.env");
    let b_env = dir.path().join("b.env");
    for (input, env, seed) in [(&a_items, &a_env, "1"), (&b_items, &b_env, "2")] {
        let out = athres(&[
            "sample",
            input.to_str().unwrap(),
            "--design",
            "heap:20",
            "--seed",
            seed,
            "-o",
            env.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }

    let out = athres(&["estimate", a_env.to_str().unwrap(), "--estimator", "ht"]);
    assert_eq!(code(&out), 0);
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rec["value"].as_f64().unwrap() > 0.0);
    assert_eq!(rec["degree_used"], 1);
    assert_eq!(rec["n_effective"], 20);

    let merged = dir.path().join("m.env");
    let out = athres(&[
        "merge",
        a_env.to_str().unwrap(),
        b_env.to_str().unwrap(),
        "--strategy",
        "naive",
        "-o",
        merged.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let header: Value = serde_json::from_str(fs::read_to_string(&merged).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["items"], 20);

    let out = athres(&["merge", a_env.to_str().unwrap(), b_env.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("min merge of 2 nodes"));
}

#[test]
fn csv_input_with_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("items.csv");
    fs::write(&input, "id,w,x,stratum\na,1,3,east\nb,-1,0,west\nc,2,5,east\n").unwrap();
    let out = athres(&["sample", input.to_str().unwrap(), "--format", "csv", "--design", "heap:5"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn factorization_verdicts_set_exit_code() {
    let pass = athres(&[
        "check",
        "factorization",
        "--design",
        "fixed_k:3",
        "--population",
        "linear:6",
        "-v",
        "2",
        "--replicates",
        "20000",
    ]);
    assert_eq!(code(&pass), 0, "{}", String::from_utf8_lossy(&pass.stdout));
    let fail = athres(&[
        "check",
        "factorization",
        "--design",
        "peek",
        "-v",
        "1",
        "--replicates",
        "2000",
        "--report",
        "json",
    ]);
    assert_eq!(code(&fail), 1);
    let rec: Value = serde_json::from_slice(&fail.stdout).unwrap();
    assert_eq!(rec["verdict"], "FAIL");
}

#[test]
fn degree_refusal_is_an_error() {
    let out = athres(&[
        "verify",
        "unbiasedness",
        "--population",
        "pairs:6",
        "--design",
        "multi:3:0,1",
        "--estimators",
        "variance",
        "--replicates",
        "100",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degree"));
}

#[test]
fn unbiasedness_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let report = dir.path().join("report.json");
    fs::write(
        &cfg,
        format!(
            "{{\"population\":\"linear:6\",\"sampler\":\"fixed_k:3\",\"estimators\":[\"ht\",\"variance\"],\"replicates\":20000,\"seed\":3,\"output\":{:?}}}",
            report.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = athres(&["verify", "unbiasedness", "--config", cfg.to_str().unwrap(), "--report", "json"]);
    assert_eq!(code(&out), 0);
    let rec: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rec["verdict"], "PASS");
}

#[test]
fn experiments_run_and_are_deterministic() {
    let args = [
        "experiment",
        "distributed-waste",
        "--nodes",
        "4",
        "--k",
        "20",
        "--n-per-node",
        "500",
        "--seed",
        "9",
        "--report",
        "json",
    ];
    let a = athres(&args);
    let b = athres(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);

    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let out = athres(&[
        "experiment",
        "logistic",
        "--n-points",
        "4000",
        "--k",
        "100",
        "--decay",
        "0",
        "--half-pilot",
        "--series",
        series.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict: PASS"));
    assert!(fs::read_to_string(&series).unwrap().starts_with("index,t,"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&athres(&[])), 2);
    assert_eq!(code(&athres(&["merge"])), 2);
    assert_eq!(code(&athres(&["sample", "--design", "bogus:1"])), 2);
    assert_eq!(code(&athres(&["estimate", "/nonexistent/file", "--estimator", "ht"])), 2);
}
