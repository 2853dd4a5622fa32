//! End-to-end checks of the `impulse` binary against the bundled
//! scenarios: subcommand wiring, exit codes, diagnostics, and report
//! emission.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn impulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulse"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn validate_bundled_two_state_succeeds() {
    let out = impulse(&["validate", scenario("two_state.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS] validation"));
}

#[test]
fn validate_missing_file_exits_with_diagnostic() {
    let out = impulse(&["validate", "/nonexistent/way/off.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn invalid_costs_name_the_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let body = std::fs::read_to_string(scenario("two_state.json"))
        .unwrap()
        .replace("[[0.5, 0.9], [0.9, 0.5]]", "[[0.0, 0.9], [0.9, 0.5]]");
    std::fs::write(&path, body).unwrap();
    let out = impulse(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(A2)"));
}

#[test]
fn solve_and_oracle_pass_on_two_state() {
    let out = impulse(&["solve", scenario("two_state.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS] solve"));
    assert!(stdout.contains("0.09"));

    let out = impulse(&["oracle", scenario("two_state.json").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS] oracle"));
}

#[test]
fn refine_demands_generator_dynamics() {
    let out = impulse(&["refine", scenario("two_state.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("generator"));
}

#[test]
fn refine_ladder_runs_on_the_ctmc_scenario() {
    let out = impulse(&[
        "refine",
        scenario("two_state_ctmc.json").to_str().unwrap(),
        "--k-horizon",
        "512",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS] refine"), "{stdout}");
}

#[test]
fn report_writes_outputs_and_respects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = impulse(&[
        "report",
        scenario("two_state.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--paths",
        "200",
        "--steps",
        "400",
        "--k-horizon",
        "512",
        "--seed",
        "7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["scenario"], "two_state");
    let ids: Vec<&str> = report["experiments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["id"].as_str().unwrap())
        .collect();
    assert!(ids.contains(&"solve"));
    assert!(ids.contains(&"oracle"));
    assert!(ids.contains(&"simulate"));
    assert!(dir.path().join("oracle_enumeration.csv").exists());
    assert!(dir.path().join("simulate_discounted.csv").exists());
}

#[test]
fn simulate_exit_code_reflects_the_gate() {
    // tiny path budget on the bundled scenario still lands within the
    // 2e-2 floor because the instance is small and fast-mixing
    let out = impulse(&[
        "simulate",
        scenario("two_state.json").to_str().unwrap(),
        "--paths",
        "500",
        "--steps",
        "2000",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
