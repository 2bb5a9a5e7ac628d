//! End-to-end tests of the `frisk` binary: flag parsing, config merging,
//! exit codes, and output-byte determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_frisk")
}

fn scratch(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn frisk binary")
}

fn stdout_of(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "frisk {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn json_of(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&stdout_of(args)).expect("json stdout")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

#[test]
fn config_file_supplies_defaults() {
    let cfg = scratch("inv_cfg.json");
    std::fs::write(&cfg, r#"{"c_prime": 0.5, "gamma": 2.0}"#).unwrap();
    let v = json_of(&["inversion", "--config", cfg.to_str().unwrap()]);
    assert_eq!(v["c_prime"].as_f64().unwrap(), 0.5);
    assert_eq!(v["gamma"].as_f64().unwrap(), 2.0);
    assert!((v["threshold"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn explicit_flags_beat_config_values() {
    let cfg = scratch("inv_cfg_override.json");
    std::fs::write(&cfg, r#"{"c_prime": 0.5, "gamma": 2.0}"#).unwrap();
    let v = json_of(&[
        "inversion",
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "4.0",
    ]);
    assert_eq!(v["gamma"].as_f64().unwrap(), 4.0);
    assert_eq!(v["c_prime"].as_f64().unwrap(), 0.5);
}

#[test]
fn config_run_matches_explicit_run_byte_for_byte() {
    let cfg = scratch("small_cfg.json");
    std::fs::write(
        &cfg,
        r#"{"beta": 0.3, "alpha": 0.7, "n": 5000, "seed": 9}"#,
    )
    .unwrap();
    let explicit = stdout_of(&[
        "smallfeedback",
        "--beta",
        "0.3",
        "--alpha",
        "0.7",
        "--n",
        "5000",
        "--seed",
        "9",
    ]);
    let via_config = stdout_of(&["smallfeedback", "--config", cfg.to_str().unwrap()]);
    assert_eq!(explicit, via_config);
}

#[test]
fn bad_config_is_an_argument_error() {
    let cfg = scratch("broken_cfg.json");
    std::fs::write(&cfg, "[1, 2, 3]").unwrap();
    assert_eq!(code(&["inversion", "--config", cfg.to_str().unwrap()]), 2);
    assert_eq!(code(&["inversion", "--config", "/no/such/file.json"]), 2);
}

#[test]
fn exit_codes_match_error_classes() {
    assert_eq!(code(&["inversion"]), 0);
    assert_eq!(code(&["--help"]), 0);
    // usage errors
    assert_eq!(code(&["no-such-subcommand"]), 2);
    assert_eq!(code(&["inversion", "--no-such-flag", "1"]), 2);
    // domain validation is an argument error
    assert_eq!(code(&["inversion", "--c-prime", "1.5"]), 2);
    assert_eq!(code(&["nonid", "--betas", "a,b", "--n", "100"]), 2);
    // certificate needs a Lipschitz loss
    assert_eq!(code(&["smallfeedback", "--loss", "squared", "--n", "100"]), 2);
    // csv is not available for scalar reports
    assert_eq!(code(&["nonid", "--format", "csv", "--n", "100"]), 2);
    // runtime failures (unwritable output path) exit 1
    assert_eq!(
        code(&["inversion", "--out", "/no-such-dir-frisk/x.json"]),
        1
    );
}

#[test]
fn nonid_example_reports_identical_passive_streams() {
    let v = json_of(&[
        "nonid", "--betas", "0,1,5", "--sigma", "0.5", "--n", "200000", "--seed", "7",
    ]);
    assert_eq!(v["passive_identical"].as_bool().unwrap(), true);
    assert_eq!(v["betas"].as_array().unwrap().len(), 3);
}

#[test]
fn analytic_crowding_csv_crosses_between_040_and_045() {
    let text = stdout_of(&[
        "crowding",
        "--cs",
        "1,0.25",
        "--gamma",
        "1.35",
        "--sigma",
        "0.5",
        "--alpha-max",
        "1",
        "--alpha-step",
        "0.05",
        "--mode",
        "analytic",
        "--format",
        "csv",
    ]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "alpha,risk_c=1,risk_c=0.25");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    let diff_at = |alpha: f64| {
        let row = rows
            .iter()
            .find(|r| (r[0] - alpha).abs() < 1e-9)
            .expect("grid row");
        row[1] - row[2]
    };
    // aggressive model is better at 0.40, worse at 0.45
    assert!(diff_at(0.40) < 0.0);
    assert!(diff_at(0.45) > 0.0);
}

#[test]
fn coverage_example_reaches_nominal_level() {
    let v = json_of(&[
        "coverage", "--p", "2", "--n", "10000", "--sigma", "1", "--L", "2", "--a-max", "1",
        "--lambda", "0.25", "--delta", "0.05", "--trials", "500", "--seed", "11",
    ]);
    assert!(v["coverage_defined"].as_bool().unwrap());
    assert!(v["param_coverage"].as_f64().unwrap() >= 0.95);
}

#[test]
fn out_file_matches_stdout_bytes() {
    let out_path = scratch("impact_out.json");
    let streamed = stdout_of(&["impact", "--n", "5000", "--seed", "3"]);
    let st = run(&[
        "impact",
        "--n",
        "5000",
        "--seed",
        "3",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    assert!(st.stdout.is_empty());
    let written = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(streamed, written);
}
