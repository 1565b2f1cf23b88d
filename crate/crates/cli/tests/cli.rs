//! Runs the built binary. Golden files live in tests/golden; regenerate them
//! with `UPDATE_GOLDEN=1 cargo test -p onebit-cli`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn onebit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onebit"))
        .args(args)
        .env_remove("ONEBIT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = onebit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, want, "golden {name} differs");
}

#[test]
fn opt_threshold_golden() {
    let out = ok(&[
        "opt-threshold",
        "--lambda",
        "0.5,0.8,0.9,0.95",
        "--policy",
        "threshold-nonpreempt,threshold-preempt",
        "--format",
        "csv",
    ]);
    golden("opt_threshold.csv", &out);
}

#[test]
fn weibull_sweep_golden() {
    let out = ok(&[
        "sweep",
        "--dist",
        "weibull",
        "--lambda",
        "0.7,0.9",
        "--threshold",
        "0.5:2:4",
        "--policy",
        "prediction-preempt",
        "--format",
        "json",
    ]);
    golden("weibull_sweep.json", &out);
}

#[test]
fn table_golden() {
    let out = ok(&["opt-threshold", "--dist", "weibull", "--lambda", "0.5,0.9", "--policy", "threshold-preempt"]);
    golden("opt_threshold_weibull.txt", &out);
}

#[test]
fn cluster_run_is_byte_stable() {
    let args = ["sim-cluster", "--n", "20", "--horizon", "2000", "--reps", "3", "--q1", "0.1", "--q2", "0.2"];
    let a = ok(&[&args[..], &["--seed", "11", "--format", "csv"]].concat());
    let b = ok(&[&args[..], &["--seed", "11", "--format", "csv"]].concat());
    let c = ok(&[&args[..], &["--seed", "12", "--format", "csv"]].concat());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn simulated_sweep_is_byte_stable() {
    let args = [
        "sweep",
        "--lambda",
        "0.8",
        "--threshold",
        "optimal",
        "--policy",
        "prediction-preempt",
        "--source",
        "both",
        "--reps",
        "2",
        "--format",
        "csv",
    ];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",analytic,"));
    assert!(lines[2].contains(",simulation,"));
    // The published optimum is attached to both rows.
    assert!(lines[1].contains(",3.451,") && lines[2].contains(",3.451,"));
}

#[test]
fn seed_precedence() {
    let cfg = scratch("seed.toml");
    std::fs::write(&cfg, "seed = 5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let base = ["sim-cluster", "--n", "10", "--horizon", "1000", "--reps", "2", "--format", "csv"];
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_onebit"));
        cmd.args(base).args(extra).env_remove("ONEBIT_SEED");
        if let Some(v) = env {
            cmd.env("ONEBIT_SEED", v);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let seed5 = run(&["--seed", "5"], None);
    let seed6 = run(&["--seed", "6"], None);
    assert_eq!(run(&["--config", cfg], None), seed5);
    assert_eq!(run(&["--config", cfg], Some("6")), seed6);
    assert_eq!(run(&["--config", cfg, "--seed", "5"], Some("6")), seed5);
    assert_eq!(run(&[], Some("6")), seed6);
}

#[test]
fn flags_override_config() {
    let cfg = scratch("sweep.toml");
    std::fs::write(
        &cfg,
        "format = \"json\"\n[sweep]\nlambda = [0.5, 0.6]\nthreshold = [1.0]\npolicy = [\"threshold-preempt\"]\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = ok(&["--config", cfg, "sweep"]);
    let v: serde_json::Value = serde_json::from_str(&from_file).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    let overridden = ok(&["--config", cfg, "sweep", "--lambda", "0.7", "--format", "csv"]);
    assert_eq!(overridden.lines().count(), 2);
    assert!(overridden.contains("exponential-0.7,0.7,1.0,"));
}

#[test]
fn example_config_parses() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("example.toml");
    let out = ok(&["--config", cfg.to_str().unwrap(), "opt-threshold"]);
    assert!(out.starts_with("scenario,lambda,threshold"));
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn output_file_format_from_extension() {
    let path = scratch("rows.json");
    let stdout = ok(&["opt-threshold", "--lambda", "0.5", "--policy", "threshold-preempt", "-o", path.to_str().unwrap()]);
    assert!(stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v[0]["policy"], "threshold-preempt");
}

#[test]
fn meanfield_exports_state() {
    let path = scratch("state.csv");
    let out = ok(&[
        "meanfield",
        "--lambda1",
        "0.05",
        "--lambda2",
        "0.2",
        "--truncation",
        "8",
        "--state-out",
        path.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.contains(",ode,"));
    let state = std::fs::read_to_string(&path).unwrap();
    let mut lines = state.lines();
    assert_eq!(lines.next(), Some("s,l,c,x"));
    let total: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "mass {total}");
}

#[test]
fn usage_errors_exit_2() {
    let cases: [&[&str]; 6] = [
        &["sweep", "--bogus"],
        &["sweep", "--lambda", "1.2", "--threshold", "1"],
        &["sweep", "--lambda", "x"],
        &["sim-cluster", "--reps", "1"],
        &["meanfield", "--q1", "2"],
        &["--config", "/nonexistent/onebit.toml", "table1"],
    ];
    for args in cases {
        assert_eq!(onebit(args).status.code(), Some(2), "{args:?}");
    }
    let bad = scratch("bad.toml");
    std::fs::write(&bad, "[sweep]\nlambdas = [0.5]\n").unwrap();
    assert_eq!(onebit(&["--config", bad.to_str().unwrap(), "sweep"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_onebit"))
        .args(["sim-cluster", "--n", "5", "--horizon", "100", "--reps", "2"])
        .env("ONEBIT_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3() {
    let out = onebit(&["meanfield", "--truncation", "4", "--max-truncation", "4"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncation"));
}
