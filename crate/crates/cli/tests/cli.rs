use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_graph-bell"));
    cmd.env_remove("GRAPH_BELL_WORKERS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn schema_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(format!("{name}.schema.json"))
}

fn assert_valid(name: &str, instance: &Value) {
    let schema: Value = serde_json::from_str(&fs::read_to_string(schema_path(name)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name} schema violations: {errors:#?}");
}

fn report(args: &[&str], result_schema: &str) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_valid("run_report", &v);
    assert_valid("expression", &v["inputs"]["expression"]);
    assert_valid(result_schema, &v["result"]);
    v
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn build_ring5_has_classical_bound_six() {
    let out = run(&["build", "--ring", "5"]);
    assert!(out.status.success());
    let e = stdout_json(&out);
    assert_valid("expression", &e);
    assert_eq!(e["meta"]["beta_c"].as_f64(), Some(6.0));
    assert_eq!(e["meta"]["family"], "graph");
}

#[test]
fn build_star4_has_weight_three() {
    let out = run(&["build", "--star", "4"]);
    assert!(out.status.success());
    let e = stdout_json(&out);
    assert_valid("expression", &e);
    let coeffs: Vec<f64> = e["terms"].as_array().unwrap().iter().map(|t| t["coeff"].as_f64().unwrap()).collect();
    assert!(coeffs.contains(&3.0), "{coeffs:?}");
    assert_eq!(e["n"], 4);
}

#[test]
fn build_tilted_routes_to_tilted_family() {
    let out = run(&["build", "--tilted", "3", "0.5236"]);
    assert!(out.status.success());
    let e = stdout_json(&out);
    assert_valid("expression", &e);
    assert_eq!(e["meta"]["family"], "tilted_ghz");
    let theta = e["meta"]["theta"].as_f64().unwrap();
    assert_eq!(theta.to_string(), "0.5236");
    assert!(close(theta, std::f64::consts::FRAC_PI_6, 1e-4));
}

#[test]
fn build_subs_routes_to_multi_substitution() {
    let out = run(&["build", "--ring", "6", "--subs", "1,4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e = stdout_json(&out);
    assert_valid("expression", &e);
    assert_eq!(e["meta"]["family"], "multi_substitution");
    assert_eq!(e["meta"]["substituted"], serde_json::json!([1, 4]));
}

#[test]
fn build_output_feeds_back_as_expression_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ring5.json");
    fs::write(&path, run(&["build", "--ring", "5"]).stdout).unwrap();
    let v = report(&["bounds", "--expr", path.to_str().unwrap(), "--bruteforce"], "bound_report");
    assert_eq!(v["result"]["beta_c_bruteforce"].as_f64(), Some(6.0));
}

#[test]
fn graph_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path4.json");
    let graph = serde_json::json!({"n": 4, "edges": [[1, 2], [2, 3], [3, 4]]});
    assert_valid("graph", &graph);
    fs::write(&path, graph.to_string()).unwrap();
    let v = report(&["bounds", "--graph", path.to_str().unwrap(), "--bruteforce", "--eig"], "bound_report");
    assert_eq!(v["pass"], true);
    assert_eq!(v["result"]["beta_c_formula"].as_f64(), Some(5.0));
}

#[test]
fn bounds_ring7_all_values_agree() {
    let v = report(&["bounds", "--ring", "7", "--bruteforce", "--eig"], "bound_report");
    let r = &v["result"];
    assert_eq!(v["pass"], true);
    assert_eq!(r["beta_c_bruteforce"], r["beta_c_formula"]);
    let q = r["beta_q_formula"].as_f64().unwrap();
    assert!(close(r["lambda_max"].as_f64().unwrap(), q, 1e-8));
    assert!(close(r["lambda_max_dense"].as_f64().unwrap(), q, 1e-8));
    assert!(close(r["state_value"].as_f64().unwrap(), q, 1e-10));
}

#[test]
fn bounds_chsh() {
    let v = report(&["bounds", "--line", "2", "--bruteforce", "--eig"], "bound_report");
    let r = &v["result"];
    assert_eq!(r["beta_c_bruteforce"].as_f64(), Some(2.0));
    assert!(close(r["lambda_max"].as_f64().unwrap(), 2.0 * std::f64::consts::SQRT_2, 1e-8));
}

#[test]
fn bounds_tilted_two_parties() {
    let theta = (std::f64::consts::PI / 8.0).to_string();
    let v = report(&["bounds", "--tilted", "2", &theta, "--bruteforce"], "bound_report");
    let r = &v["result"];
    assert!(close(r["beta_c_bruteforce"].as_f64().unwrap(), r["beta_c_formula"].as_f64().unwrap(), 1e-9));
}

#[test]
fn bounds_table_is_plain_text() {
    let out = run(&["bounds", "--ring", "4", "--bruteforce", "--table"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("quantity"));
    assert!(text.contains("beta_C brute force"));
}

#[test]
fn certify_ring5() {
    let v = report(&["certify", "--ring", "5", "--draws", "100", "--seed", "7"], "certificate_report");
    assert_eq!(v["seeds"]["base"], 7);
    assert!(v["result"]["max_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["result"]["draws"].as_array().unwrap().len(), 100);
}

#[test]
fn certify_tilted() {
    let v = report(&["certify", "--tilted", "4", "0.3", "--draws", "20"], "certificate_report");
    assert_eq!(v["pass"], true);
}

#[test]
fn selftest_star5_fidelity_one() {
    let v = report(&["selftest", "--star", "5"], "selftest_report");
    assert!(close(v["result"]["fidelity"].as_f64().unwrap(), 1.0, 1e-10));
    assert_eq!(v["result"]["schmidt_rank"], 1);
}

#[test]
fn selftest_perturbed_fails_with_code_one() {
    let out = run(&["selftest", "--ring", "4", "--perturb", "0.05"]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert_valid("run_report", &v);
    assert_valid("selftest_report", &v["result"]);
    assert_eq!(v["pass"], false);
    assert!(v["result"]["fidelity"].as_f64().unwrap() < 1.0);
}

#[test]
fn robust_star3_curve_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let v = report(
        &["robust", "--star", "3", "--grid", "9", "--samples", "50", "--out", csv.to_str().unwrap()],
        "robustness",
    );
    assert_eq!(v["pass"], true);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("relative_violation,fidelity_bound"));
    let last = lines.last().unwrap();
    let (x, f) = last.split_once(',').unwrap();
    assert_eq!(x.parse::<f64>().unwrap(), 1.0);
    assert!(close(f.parse::<f64>().unwrap(), 1.0, 1e-6), "{last}");
}

#[test]
fn invalid_input_exits_two_with_error_object() {
    for args in [
        &["build", "--ring", "6", "--subs", "1,2"][..],
        &["build", "--ring", "2"][..],
        &["build", "--tilted", "3", "abc"][..],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).expect("error object on stderr");
        assert_valid("error", &err);
    }
}

#[test]
fn malformed_graph_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"n": 3, "edges": [[1, 1]]}"#).unwrap();
    let out = run(&["build", "--graph", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_valid("error", &serde_json::from_slice(&out.stderr).unwrap());
}

#[test]
fn guard_exits_three() {
    let out = run(&["bounds", "--ring", "20", "--bruteforce"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_valid("error", &err);
    assert_eq!(err["error"]["kind"], "resource_guard");
}

#[test]
fn workers_from_environment() {
    let out = bin().env("GRAPH_BELL_WORKERS", "2").args(["bounds", "--ring", "5"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["workers"], 2);
}

#[test]
fn fixed_seed_is_deterministic() {
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    let args = ["certify", "--ring", "6", "--draws", "10", "--seed", "11"];
    let a = strip(stdout_json(&run(&args)));
    let b = strip(stdout_json(&run(&args)));
    assert_eq!(a, b);
    let args = ["robust", "--ring", "3", "--samples", "20", "--seed", "5", "--points", "5"];
    let a = strip(stdout_json(&run(&args)));
    let b = strip(stdout_json(&run(&args)));
    assert_eq!(a, b);
    assert_eq!(a["seeds"]["validity"], 5);
}
