use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cig"))
        .args(args)
        .output()
        .expect("failed to start cig")
}

fn ok_json(args: &[&str]) -> Value {
    let out = cig(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err_text(args: &[&str]) -> String {
    let out = cig(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn spectrum_from_csv_flags_singularity() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pi.csv", "bin,probability\n0,0.25\n1,0.25\n2,0\n3,0.5\n");
    let v = ok_json(&["spectrum", "--input", &input]);
    assert_eq!(v["result"]["singular"], true);
    assert_eq!(v["result"]["eigenvalues"].as_array().unwrap().len(), 3);
    assert_eq!(v["tool"]["name"], "cig");
    assert_eq!(v["config"]["params"]["with_generators"], false);
}

#[test]
fn uniform_spectrum_has_two_values() {
    let v = ok_json(&["spectrum", "--preset", "uniform"]);
    assert_eq!(v["result"]["spectrum"]["multiplicities"], serde_json::json!([3, 1]));
}

#[test]
fn malformed_inputs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "pi.csv", "probability\n0.5\nabc\n");
    assert!(err_text(&["spectrum", "--input", &bad]).contains("row 3"));
    let off = write(dir.path(), "off.csv", "probability\n0.5\n0.6\n");
    assert!(err_text(&["spectrum", "--input", &off]).contains("simplex"));
    let nohead = write(dir.path(), "c.csv", "count\n");
    assert!(err_text(&["fit-mixture", "--input", &nohead]).contains("no rows"));
    let missing = dir.path().join("nope.csv");
    assert!(!cig(&["spectrum", "--input", missing.to_str().unwrap()]).status.success());
    assert!(err_text(&["spectrum"]).contains("--preset"));
    assert!(err_text(&["spectrum", "--preset", "table1"]).contains("unknown preset"));
}

#[test]
fn config_rejects_unknown_keys_and_mismatched_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.json", r#"{"subcommand":"spectrum","params":{"probabilites":[0.5,0.5]}}"#);
    assert!(err_text(&["spectrum", "--config", &c]).contains("unknown field"));
    let c = write(dir.path(), "d.json", r#"{"subcommand":"limits"}"#);
    assert!(err_text(&["spectrum", "--config", &c]).contains("limits"));
}

#[test]
fn preset_and_input_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "pi.csv", "probability\n0.5\n0.5\n");
    assert!(err_text(&["spectrum", "--preset", "uniform", "--input", &input]).contains("not both"));
}

#[test]
fn config_params_override_preset_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(
        dir.path(),
        "c.json",
        r#"{"subcommand":"edgeworth","preset":"skewed","tol":{"newton":1e-9},"params":{"sample_size":12}}"#,
    );
    let v = ok_json(&["edgeworth", "--config", &c, "--tol.newton", "1e-8"]);
    assert_eq!(v["config"]["params"]["sample_size"], 12);
    assert_eq!(v["result"]["sample_size"], 12);
    assert_eq!(v["config"]["params"]["base"], serde_json::json!([0.7, 0.2, 0.1]));
    assert_eq!(v["config"]["tol"]["newton"], 1e-8);
}

#[test]
fn limits_from_json_family_and_nonexistent_mle_is_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let fam = write(
        dir.path(),
        "fam.json",
        r#"{"base_point":[0.25,0.25,0.25,0.25],"plus_directions":[[0,1,2,3]]}"#,
    );
    let v = ok_json(&["limits", "--input", &fam]);
    assert_eq!(v["result"]["reachable_vertices"], serde_json::json!([0, 3]));
    assert_eq!(v["result"]["redundant_components"], serde_json::json!([1, 2]));

    let c = write(dir.path(), "c.json", r#"{"subcommand":"limits","preset":"example5","params":{"counts":[0,0,0,4]}}"#);
    let v = ok_json(&["limits", "--config", &c]);
    assert_eq!(v["result"]["mle"]["exists_interior"], false);
    assert_eq!(v["result"]["mle"]["boundary_face"], serde_json::json!([3]));
}

#[test]
fn saturated_limits_reach_every_vertex() {
    let v = ok_json(&["limits", "--preset", "saturated"]);
    assert_eq!(v["result"]["reachable_vertices"], serde_json::json!([0, 1, 2, 3, 4]));
}

#[test]
fn fit_mixture_from_counts_csv_writes_support_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "counts.csv", "successes,count\n0,30\n1,40\n2,30\n");
    let table = dir.path().join("support.csv");
    let out = dir.path().join("fit.json");
    let res = cig(&[
        "fit-mixture",
        "--input",
        &input,
        "--csv",
        table.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert!(res.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["params"]["trials"], 2);
    let fit = &v["result"]["fit"];
    assert!(fit["max_directional_derivative"].as_f64().unwrap() <= fit["dd_tol"].as_f64().unwrap());
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta,weight"));
    let total: f64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn single_point_truth_gives_degenerate_fit() {
    let v = ok_json(&["fit-mixture", "--preset", "single-point"]);
    assert_eq!(v["result"]["fit"]["support"], serde_json::json!([0.5]));
}

#[test]
fn simulation_follows_the_seed() {
    let a = ok_json(&["fit-mixture", "--preset", "two-point-sim", "--seed", "1"]);
    let b = ok_json(&["fit-mixture", "--preset", "two-point-sim", "--seed", "2"]);
    assert_ne!(a["result"]["counts"], b["result"]["counts"]);
    assert_eq!(a["config"]["seed"], 1);
}

#[test]
fn wrong_cell_count_for_trials_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.json", r#"{"subcommand":"fit-mixture","params":{"counts":[1,2,3],"trials":5}}"#);
    assert!(err_text(&["fit-mixture", "--config", &c]).contains("trials"));
}

#[test]
fn discretize_reads_times_and_needs_a_censoring_time() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "t.csv", "time\n12\n40\n77\n150\n230\n300\n410\n");
    assert!(err_text(&["discretize", "--input", &input]).contains("censoring"));
    let c = write(dir.path(), "c.json", r#"{"subcommand":"discretize","params":{"censor":250,"width":5}}"#);
    let v = ok_json(&["discretize", "--config", &c, "--input", &input]);
    assert_eq!(v["config"]["params"]["model"], "censored-exponential");
    assert_eq!(v["result"]["uncensored"], 5);
    assert_eq!(v["result"]["grid_clipped"], true);
    assert!(v["result"]["relative_curve_difference"].as_f64().unwrap() < 0.05);
}

#[test]
fn zero_discrepancy_preset_gives_a_zero_row() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("d.csv");
    ok_json(&["discretize", "--preset", "zero-discrepancy", "--csv", table.to_str().unwrap()]);
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text, "bins,max_width,theta,discrepancy\n20,0.5,0.7,0\n");
}

#[test]
fn lattice_family_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "f.csv", "weight,statistic\n0.5,0\n0.3,1\n0.2,2\n");
    let v = ok_json(&["saddlepoint", "--input", &input]);
    assert_eq!(v["config"]["params"]["sample_size"], 10);
    assert!(v["result"]["total_variation"].as_f64().unwrap() < 0.02);
    let v = ok_json(&["edgeworth", "--input", &input]);
    assert_eq!(v["result"]["edgeworth_beats_normal"], true);
}

#[test]
fn bernoulli_table_has_exact_column() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("sp.csv");
    ok_json(&["saddlepoint", "--preset", "bernoulli", "--csv", table.to_str().unwrap()]);
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t_bar,exact,saddlepoint,saddlepoint_raw,boundary"));
    assert_eq!(lines.count(), 11);
}

#[test]
fn logistic_design_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("intercept,x,response\n");
    for (i, y) in [0, 1, 0, 1, 0, 1, 1].iter().enumerate() {
        text.push_str(&format!("1,{},{y}\n", i + 1));
    }
    let input = write(dir.path(), "d.csv", &text);
    let v = ok_json(&["embed-logistic", "--input", &input]);
    assert_eq!(v["result"]["responses"], "0101011");
    assert_eq!(v["result"]["fit"]["converged"], true);
    let bad = write(dir.path(), "b.csv", "x,response\n1,2\n");
    assert!(err_text(&["embed-logistic", "--input", &bad]).contains("not 0 or 1"));
}

#[test]
fn separated_logistic_data_exits_zero() {
    let v = ok_json(&["embed-logistic", "--preset", "logistic7-boundary"]);
    assert_eq!(v["result"]["mle"]["exists_interior"], false);
    assert!(v["result"]["fit"].is_null());
}
