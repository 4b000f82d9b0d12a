//! Runs the `exploding` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn exploding(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exploding")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn limits_prints_the_semicircle_fourth_moment() {
    let out = exploding(&["limits", "--model", "elliptic", "--kmax", "4", "--rho", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().last(), Some("m_4 = 3"));
}

#[test]
fn circulant_limits_use_the_corrected_formula() {
    let out = exploding(&["limits", "--model", "circulant", "--kmax", "6", "--profile", "sparse"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("m_4 = 4"), "{text}");
    assert!(text.contains("m_6 = 31"), "{text}");
}

#[test]
fn unknown_model_is_a_usage_error() {
    let out = exploding(&["limits", "--model", "toeplitz"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"kmax\": 4,\n  \"reps\": ,\n}\n").unwrap();
    let out = exploding(&["limits", "--config", path_arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.json");
    std::fs::write(&path, r#"{"kmaxx": 4}"#).unwrap();
    let out = exploding(&["limits", "--config", path_arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_fails_under_an_impossible_threshold() {
    let args = ["verify", "--model", "elliptic", "--rho", "1/2", "--n", "60", "--reps", "200", "--kmax", "4"];
    let out = exploding(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let strict = [&args[..], &["--z-threshold", "1e-9"]].concat();
    let out = exploding(&strict);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains(",fail"));
}

#[test]
fn verify_csv_has_the_report_columns() {
    let out = exploding(&["verify", "--model", "iid", "--profile", "sparse", "--n", "50", "--reps", "150", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().next(), Some("k,l,predicted,oracle,empirical,stderr,zscore,pass"));
}

#[test]
fn json_report_reproduces_itself() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    let out = exploding(&[
        "verify", "--model", "block", "--rho", "-1/3", "--n", "40", "--reps", "150", "--seed", "9", "--format", "json",
        "--output", path_arg(&first),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = exploding(&["verify", "--config", path_arg(&first)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), std::fs::read_to_string(&first).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["simulate", "--model", "elliptic", "--rho", "0", "--n", "80", "--reps", "120", "--format", "json"];
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_exploding")).args(args).env("EXPLODING_THREADS", threads).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        out.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn simulate_json_carries_statistics() {
    let out = exploding(&["simulate", "--model", "circulant", "--profile", "light", "--n", "32", "--reps", "100", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = doc["stats"]["mean"].as_array().or_else(|| doc["mean"].as_array()).expect("mean array");
    assert_eq!(mean.len(), 4);
}

#[test]
fn oracle_lists_exact_values() {
    let out = exploding(&["oracle", "--model", "circulant", "--profile", "sparse", "--n", "5", "--kmax", "4", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("quantity,model,n,k,l,value,approx,method"), "{text}");
    // E Tr C^4 = (4N - 3)/N and Var Z(2) = 12/5 at N = 5
    assert!(text.lines().any(|l| l.contains(",5,4,,17/5,")), "{text}");
    assert!(text.lines().any(|l| l.contains(",5,2,2,12/5,")), "{text}");
}

#[test]
fn weaver_dump_writes_the_sampled_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("m.txt");
    let out = exploding(&["weaver", "--n", "9", "--profile", "light", "--dump", path_arg(&dump), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.starts_with("# centrosymmetric 9 "), "{text}");
    let entries: Vec<(usize, usize, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert!(!entries.is_empty());
    for &(i, j, v) in &entries {
        assert!(entries.iter().any(|&(a, b, w)| a == 8 - i && b == 8 - j && w == v), "no mirror for ({i},{j})");
    }
}

#[test]
fn weaver_rejects_other_models() {
    let out = exploding(&["weaver", "--model", "iid", "--n", "9"]);
    assert_eq!(out.status.code(), Some(2));
}
