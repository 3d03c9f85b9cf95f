use std::path::Path;
use std::process::{Command, Output};

fn seqexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqexp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"{
  "model": [
    {"kind": "bivariate-normal", "params": {"nu": 0.5, "rho": 0.4}},
    {"kind": "bivariate-normal", "params": {"nu": 0.25, "rho": 0.8}}
  ],
  "a": [10, 25],
  "alpha": 0.05,
  "reps": 300,
  "seed": 42,
  "methods": ["anscombe", "corrected-zero-mu3", "corrected-estimated-mu3"]
}"#;

const SKEWED: &str = r#"{
  "model": {"kind": "gamma-shifted", "params": {"nu": 0.5, "x_sd": 1.0, "shape": 2.0, "scale": 1.0, "coupling": 0.3}},
  "a": 10,
  "ladder_draws": 20000
}"#;

const EXPONENTIAL: &str = r#"{
  "model": {"kind": "positive-exponential", "params": {"rate": 1.0, "intercept": [0.0], "slope": [1.0], "noise_sd": [1.0]}},
  "a": 10
}"#;

#[test]
fn pure_normal_t0_cdf_is_one_half() {
    let o = seqexp(&[
        "eval",
        "--op",
        "t0_cdf",
        "--c",
        "0",
        "--mu3",
        "0",
        "--sigma-xy",
        "0",
        "--a",
        "25",
        "--nu",
        "0.5",
        "--sigma",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "0.5\n");
}

#[test]
fn eval_matches_known_values() {
    let o = seqexp(&[
        "eval",
        "--op",
        "t0_cdf",
        "--c",
        "1.645",
        "--a",
        "25",
        "--nu",
        "0.5",
        "--sigma",
        "1",
        "--mu3",
        "0",
        "--sigma-xy",
        "0.4",
    ]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 0.944182).abs() < 1e-6, "{v}");
    let o = seqexp(&[
        "eval",
        "--op",
        "hall_quantile",
        "--p",
        "0.5",
        "--a",
        "25",
        "--nu",
        "0.5",
        "--sigma",
        "1",
        "--mu3",
        "0",
        "--sigma-xy",
        "0.4",
    ]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    // median shift: -sqrt(nu/a) * (-sigma_xy / (2 nu sigma))
    assert!((v - 0.4 * 0.02f64.sqrt()).abs() < 1e-12, "{v}");
}

#[test]
fn zero_reps_is_a_config_error() {
    let o = seqexp(&["coverage", "--reps", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("reps"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["coverage", "--bogus"],
        vec!["frobnicate"],
        vec!["eval", "--op", "nope"],
        vec!["eval", "--op", "t0_cdf", "--c", "1"],
        vec!["coverage", "--config", "/nonexistent/config.json"],
        vec!["coverage", "--alpha", "0.7"],
    ] {
        let o = seqexp(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"model": {"kind": "bivariate-normal", "params": {"nu": 0.5, "rho": 0.4}}, "a": 10, "repz": 5}"#,
    );
    let o = seqexp(&["coverage", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("repz"), "{}", stderr(&o));
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "short.json",
        r#"{"model": {"kind": "bivariate-normal", "params": {"nu": 0.5, "rho": 0.4}}, "a": 50, "reps": 100, "max_steps": 2}"#,
    );
    let o = seqexp(&["coverage", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("rejected"));
}

#[test]
fn coverage_csv_has_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("t1.csv");
    let o = seqexp(&[
        "coverage",
        "--config",
        &cfg,
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(
        lines[0],
        "interval,a=10 nu=0.5 rho=0.4,a=10 nu=0.25 rho=0.8,a=25 nu=0.5 rho=0.4,a=25 nu=0.25 rho=0.8"
    );
    assert!(lines[1].starts_with("\"(LCL_0, UCL_0)\","));
    assert!(lines[2].starts_with("P(mu >= UCL_0),"));
    assert!(lines[9].starts_with("P(mu <= LCL_1^(2)),"));
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 2);
}

#[test]
fn format_follows_output_extension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("r.csv");
    let o = seqexp(&[
        "coverage",
        "--config",
        &cfg,
        "--reps",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("interval,"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let o = seqexp(&[
        "coverage", "--config", &cfg, "--a", "15", "--reps", "40", "--alpha", "0.1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["a"], serde_json::json!([15.0]));
    assert_eq!(v["config"]["reps"], 40);
    assert_eq!(v["config"]["alpha"], 0.1);
    assert_eq!(v["cells"].as_array().unwrap().len(), 6);
}

#[test]
fn seed_determines_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let run = |seed: &str, workers: &str| {
        seqexp(&["coverage", "--config", &cfg, "--seed", seed, "--workers", workers]).stdout
    };
    let a = run("9", "1");
    assert_eq!(a, run("9", "3"));
    assert_ne!(a, run("10", "1"));
    let sim = |seed: &str| seqexp(&["simulate", "--config", &cfg, "--seed", seed, "--reps", "20"]).stdout;
    assert_eq!(sim("3"), sim("3"));
}

#[test]
fn full_precision_by_default_and_digits_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let full = stdout(&seqexp(&[
        "coverage", "--config", &cfg, "--reps", "50", "--format", "csv",
    ]));
    let cell = full.lines().nth(1).unwrap().rsplit(',').next().unwrap();
    assert_eq!(cell.split('e').next().unwrap().replace('.', "").len(), 17, "{cell}");
    let short = stdout(&seqexp(&[
        "coverage", "--config", &cfg, "--reps", "50", "--format", "csv", "--digits", "3",
    ]));
    let cell = short.lines().nth(1).unwrap().rsplit(',').next().unwrap();
    assert!(cell.len() <= 5, "{cell}");
}

fn eval_value(args: &[&str]) -> String {
    let o = seqexp(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

#[test]
fn moments_round_trip_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text, ops) in [
        (
            "skewed.json",
            SKEWED,
            vec![
                vec!["--op", "marginal_cdf_w", "--w", "4"],
                vec!["--op", "t0_cdf", "--c", "-1"],
                vec!["--op", "hall_quantile", "--p", "0.9"],
            ],
        ),
        (
            "exp.json",
            EXPONENTIAL,
            vec![
                vec!["--op", "renewal_density", "--x", "2.5", "--z", "-0.3"],
                vec!["--op", "marginal_cdf_w", "--w", "11"],
            ],
        ),
    ] {
        let cfg = write(dir.path(), name, text);
        let m = dir.path().join(format!("m_{name}"));
        let o = seqexp(&["moments", "--config", &cfg, "--out", m.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        for op in ops {
            let mut direct = vec!["eval", "--config", cfg.as_str(), "--a", "10"];
            direct.extend(op.iter().copied());
            let mut replay = vec!["eval", "--moments", m.to_str().unwrap(), "--a", "10"];
            replay.extend(op.iter().copied());
            let x = eval_value(&direct);
            assert_eq!(x, eval_value(&replay), "{op:?}");
            assert!(x.trim().parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let exp = write(dir.path(), "exp.json", EXPONENTIAL);
    let skew = write(dir.path(), "skewed.json", SKEWED);
    for args in [
        vec!["simulate", "--config", &exp, "--reps", "30"],
        vec!["cdf", "--config", &skew, "--reps", "200", "--statistic", "t"],
        vec!["cdf", "--config", &skew, "--reps", "200", "--statistic", "w_marginal"],
        vec!["identities", "--config", &skew, "--format", "csv"],
        vec!["renewal", "--config", &exp, "--reps", "500"],
        vec!["moments", "--config", &exp, "--format", "csv"],
    ] {
        let o = seqexp(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn renewal_needs_positive_increments() {
    let o = seqexp(&["renewal", "--reps", "10"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
