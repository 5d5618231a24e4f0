use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FLAGSHIP: [&str; 4] = ["--null-dist", "0.7,0.3", "--alt-dist", "0.5,0.5"];
const GRID: [&str; 2] = ["--n-grid", "100,316,1000,3162,10000"];

fn divtest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divtest"))
        .args(args)
        .env_remove("DIVTEST_SEED")
        .output()
        .expect("spawn divtest")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    let idx = header.iter().position(|h| *h == name).expect("column");
    lines
        .map(|l| l.split(',').nth(idx).expect("cell").to_string())
        .collect()
}

#[test]
fn calibrate_small_instance() {
    let out = divtest(&[
        "calibrate",
        "--null-dist",
        "0.5,0.5",
        "--n-grid",
        "4",
        "--eps",
        "0.3",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let r: f64 = csv_column(&text, "r_star")[0].parse().unwrap();
    let a: f64 = csv_column(&text, "achieved_type1")[0].parse().unwrap();
    // midpoint of KL((1/4,3/4)||P0) and KL((0,1)||P0) = ln 2
    let kl_quarter = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
    let by_hand = 0.5 * (kl_quarter + 2.0f64.ln());
    assert!((r - by_hand).abs() < 1e-12, "{r} vs {by_hand}");
    assert!((r - 0.411979).abs() < 1e-6);
    assert!((a - 0.125).abs() < 1e-12);
}

#[test]
fn invalid_eps_names_the_field() {
    let out = divtest(&[
        "calibrate",
        "--null-dist",
        "0.5,0.5",
        "--n-grid",
        "4",
        "--eps",
        "1.5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("eps"), "{}", stderr(&out));
}

#[test]
fn empty_grid_is_a_config_error() {
    let out = divtest(&["calibrate", "--null-dist", "0.5,0.5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n_grid"));
}

#[test]
fn unsorted_grid_is_a_config_error() {
    let out = divtest(&["calibrate", "--null-dist", "0.5,0.5", "--n-grid", "10,5"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_flagship_passes() {
    let mut args = vec!["verify-asymptotics"];
    args.extend(FLAGSHIP);
    args.extend(GRID);
    let out = divtest(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("verdict: PASS"));
    assert_eq!(stdout(&out).lines().count(), 6);
}

#[test]
fn verify_with_wrong_dof_fails() {
    let mut args = vec!["verify-asymptotics", "--dof-override", "2"];
    args.extend(FLAGSHIP);
    args.extend(GRID);
    let out = divtest(&args);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("verdict: FAIL"));
}

#[test]
fn verify_needs_four_points() {
    let mut args = vec!["verify-asymptotics", "--n-grid", "100"];
    args.extend(FLAGSHIP);
    assert_eq!(code(&divtest(&args)), 2);
}

#[test]
fn optimizer_check_flagship_all_true() {
    let mut args = vec!["optimizer-check", "--n-grid", "10,100,1000"];
    args.extend(FLAGSHIP);
    let out = divtest(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&out);
    let res = &v["results"];
    assert_eq!(res["all_checks_pass"], true);
    for key in [
        "positive",
        "on_boundary",
        "value_matches",
        "stationarity_ok",
    ] {
        assert_eq!(res["checks"][key], true, "{key}");
    }
    assert_eq!(res["brute_force"]["not_below_analytic"], true);
    assert_eq!(res["brute_force"]["within_tolerance"], true);
    for row in res["rounding"].as_array().unwrap() {
        if row["applicable"] == true {
            for key in ["sums_to_n", "in_ball", "gap_within_kappa"] {
                assert_eq!(row[key], true, "{key} at n={}", row["n"]);
            }
        }
    }
}

#[test]
fn radius_beyond_guard_exits_4() {
    let mut args = vec!["optimizer-check", "--r-tilde", "5"];
    args.extend(FLAGSHIP);
    let out = divtest(&args);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn identical_hypotheses_rejected() {
    let out = divtest(&[
        "optimizer-check",
        "--null-dist",
        "0.7,0.3",
        "--alt-dist",
        "0.7,0.3",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("alt_dist"));
}

#[test]
fn budget_exceeded_exits_3() {
    let out = divtest(&[
        "calibrate",
        "--null-dist",
        "0.25,0.25,0.25,0.25",
        "--n-grid",
        "1000",
        "--budget",
        "1000",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

fn run_to_dir(dir: &Path, name: &str, extra: &[&str]) -> (Vec<u8>, Vec<u8>) {
    let csv = dir.join(format!("{name}.csv"));
    let mut args = vec![
        "sweep", "--mode", "both", "--trials", "3000", "--seed", "11", "--n-grid", "40,80",
    ];
    args.extend(FLAGSHIP);
    args.extend(extra);
    let path = csv.to_str().unwrap().to_string();
    args.extend(["--output-path", &path]);
    let out = divtest(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (
        std::fs::read(&csv).unwrap(),
        std::fs::read(csv.with_extension("json")).unwrap(),
    )
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to_dir(dir.path(), "a", &[]);
    let b = run_to_dir(dir.path(), "b", &[]);
    assert_eq!(a.0, b.0);
    // the config embeds output_path, so compare with it blanked
    let strip = |bytes: &[u8]| {
        let mut v: Value = serde_json::from_slice(bytes).unwrap();
        v["config"]["output_path"] = Value::Null;
        v
    };
    assert_eq!(strip(&a.1), strip(&b.1));
    let c = run_to_dir(dir.path(), "c", &["--threads", "1"]);
    assert_eq!(a.0, c.0);
}

#[test]
fn csv_header_and_json_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = run_to_dir(dir.path(), "m", &[]);
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("n,r,"));
    let v: Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "sweep");
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["config"]["trials"], 3000);
    assert_eq!(v["config"]["null_dist"][0], 0.7);
}

#[test]
fn numbers_round_trip() {
    let out = divtest(&[
        "calibrate",
        "--null-dist",
        "0.3,0.7",
        "--n-grid",
        "10",
        "--eps",
        "0.1",
    ]);
    let text = stdout(&out);
    for cell in csv_column(&text, "r_star") {
        let x: f64 = cell.parse().unwrap();
        assert_eq!(format!("{x:.16e}"), cell);
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "null_dist = [0.5, 0.5]\nn_grid = [4]\neps = 0.3\n").unwrap();
    let path = cfg.to_str().unwrap();
    let base = divtest(&["--config", path, "calibrate"]);
    assert_eq!(code(&base), 0, "{}", stderr(&base));
    assert!(csv_column(&stdout(&base), "r_star")[0].starts_with("4.1197"));
    let over = divtest(&["--config", path, "calibrate", "--eps", "0.05"]);
    assert_ne!(
        csv_column(&stdout(&over), "r_star"),
        csv_column(&stdout(&base), "r_star")
    );
    let direct = divtest(&[
        "calibrate",
        "--null-dist",
        "0.5,0.5",
        "--n-grid",
        "4",
        "--eps",
        "0.05",
    ]);
    assert_eq!(stdout(&over), stdout(&direct));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = divtest(&["--config", cfg.to_str().unwrap(), "calibrate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn seed_env_is_last_resort() {
    let args = [
        "errors",
        "--null-dist",
        "0.7,0.3",
        "--alt-dist",
        "0.5,0.5",
        "--n-grid",
        "50",
        "--mode",
        "mc",
        "--trials",
        "2000",
    ];
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_divtest"));
        cmd.args(args).args(extra).env_remove("DIVTEST_SEED");
        if let Some(s) = env {
            cmd.env("DIVTEST_SEED", s);
        }
        cmd.output().unwrap().stdout
    };
    let from_env = run(Some("9"), &[]);
    assert_eq!(from_env, run(None, &["--seed", "9"]));
    assert_ne!(from_env, run(None, &[]));
    assert_eq!(run(Some("1"), &["--seed", "9"]), from_env);
}
