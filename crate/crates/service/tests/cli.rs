use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn robbins(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robbins")).args(args).stdin(Stdio::null()).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn exact_two_is_five_quarters() {
    let out = robbins(&["exact", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["n"], 2);
    assert!((v["value"].as_f64().unwrap() - 1.25).abs() < 1e-9);
    assert!(!out.stderr.is_empty());
}

#[test]
fn exact_seven_is_refused() {
    let out = robbins(&["exact", "--n", "7"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}

#[test]
fn argument_errors_exit_two() {
    assert_eq!(robbins(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(robbins(&[]).status.code(), Some(2));
    assert_eq!(robbins(&["exact", "--n", "two"]).status.code(), Some(2));
    assert_eq!(robbins(&["ode", "--h", "cubic"]).status.code(), Some(2));
    // Well-formed but meaningless for the model.
    assert_eq!(robbins(&["poisson-w", "--c", "0.5", "--t", "5"]).status.code(), Some(2));
    assert_eq!(robbins(&["--help"]).status.code(), Some(0));
}

#[test]
fn correlation_of_three() {
    let out = robbins(&["correlate", "--n", "3", "--reps", "1000000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let (est, se) = (v["estimate"].as_f64().unwrap(), v["std_error"].as_f64().unwrap());
    assert!((est - 0.5f64.sqrt()).abs() < 5.0 * se, "{v}");
    assert_eq!(robbins(&["correlate", "--n", "100000", "--reps", "1000000"]).status.code(), Some(3));
}

#[test]
fn experiment_commands_emit_json() {
    let v = json_of(&robbins(&["secretary", "--n", "5"]));
    assert_eq!(v["cutoff"], 3);
    let v = json_of(&robbins(&["truncate", "--n", "3", "--j", "1"]));
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    // The family needs c -> 1 to reach the n = 2 optimum 1.25.
    let v = json_of(&robbins(&["ml-opt", "--n", "2", "--lo", "1.001", "--hi", "10"]));
    let value = v["value"].as_f64().unwrap();
    assert!((1.25 - 1e-12..1.251).contains(&value), "{v}");
    let v = json_of(&robbins(&["ml-opt", "--n", "5", "--free"]));
    assert!(v["converged"].as_bool().unwrap());
    let v = json_of(&robbins(&["poisson-w", "--c", "2", "--t", "5", "--mc", "20000"]));
    assert!((v["value"].as_f64().unwrap() - v["mc"]["mean"].as_f64().unwrap()).abs() < 5.0 * v["mc"]["se"].as_f64().unwrap());
    let v = json_of(&robbins(&["ode", "--h", "const:0.5", "--tmax", "50"]));
    assert!(v["limit"].as_f64().unwrap() > 0.0);
    assert!(v["trajectory"].as_array().unwrap().len() <= 201);
    let v = json_of(&robbins(&["cloud-search", "--n", "50", "--batch", "50", "--rounds", "5"]));
    assert_eq!(v["history"].as_array().unwrap().len(), 5);
}

#[test]
fn table_round_trip_through_ode() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.json");
    let p = path.to_str().unwrap();
    assert_eq!(robbins(&["h-table", "--reps", "500", "--out", p]).status.code(), Some(0));
    let out = robbins(&["ode", "--h", &format!("table:{p}"), "--tmax", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json_of(&out)["limit"].as_f64().unwrap() > 0.0);
    assert_eq!(robbins(&["ode", "--h", "table:/no/such/file"]).status.code(), Some(1));
}

#[test]
fn terminal_game() {
    let out = robbins(&["play", "--m", "1", "--seed", "3", "--machine"]);
    assert_eq!(out.status.code(), Some(0));
    let rec = json_of(&out);
    assert_eq!(rec["outcome"]["final_rank"], 1);

    // Pass everything from stdin: the last arrival is taken.
    let mut child = Command::new(env!("CARGO_BIN_EXE_robbins"))
        .args(["play", "--m", "12", "--seed", "9", "--objective", "top-percent:25"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all("p\n".repeat(12).as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rec = json_of(&out);
    assert_eq!(rec["outcome"]["forced"], true);
    assert_eq!(rec["outcome"]["accepted_index"], rec["outcome"]["N"]);
    assert_eq!(rec["machine"]["objective"]["kind"], "TOP_PERCENT");
}
