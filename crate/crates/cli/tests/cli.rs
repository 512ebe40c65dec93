use std::path::Path;
use std::process::{Command, Output};

use fhmm_core::io;

const MODEL: &str = r#"
num_variables = 4
cardinality = 2
state_values = [0.0, 1.0]
transition = [[0.6, 0.4], [0.2, 0.8]]
initial = [0.0, 1.0]
c = 1.0
sigma2 = 1.0
graph = "chain"
"#;

fn fhmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhmm"))
        .args(args)
        .env("FHMM_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fhmm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setup(steps: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.toml"), MODEL).unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--model", s(&dir.path().join("model.toml")), "--steps", &steps.to_string(), "--seed", "5", "--out", s(&sim)]);
    dir
}

#[test]
fn usage_errors_exit_one_and_runtime_errors_exit_two() {
    assert_eq!(fhmm(&[]).status.code(), Some(1));
    assert_eq!(fhmm(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(fhmm(&["simulate", "--steps", "x"]).status.code(), Some(1));
    assert_eq!(fhmm(&["--help"]).status.code(), Some(0));
    assert_eq!(fhmm(&["--version"]).status.code(), Some(0));
    let out = fhmm(&["filter", "--model", "/nonexistent.toml", "--obs", "/nonexistent.csv", "--out", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent.toml"));
}

#[test]
fn invalid_model_reports_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, MODEL.replace("[0.6, 0.4]", "[0.7, 0.4]")).unwrap();
    let out = fhmm(&["simulate", "--model", s(&path), "--steps", "3", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 0"));
}

#[test]
fn simulate_is_reproducible() {
    let a = setup(15);
    let b = setup(15);
    for name in ["observations.csv", "states.csv"] {
        let x = std::fs::read(a.path().join("sim").join(name)).unwrap();
        let y = std::fs::read(b.path().join("sim").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let states = io::load_states_csv(&a.path().join("sim/states.csv")).unwrap();
    assert_eq!(states.len(), 16);
    assert_eq!(states[0], vec![1, 1, 1, 1]);
    let obs = io::load_observations_csv(&a.path().join("sim/observations.csv")).unwrap();
    assert_eq!((obs.len(), obs.num_factors()), (15, 3));
}

#[test]
fn compare_with_trivial_partition_is_exact() {
    let dir = setup(20);
    let out = dir.path().join("cmp.csv");
    let model = dir.path().join("model.toml");
    let obs = dir.path().join("sim/observations.csv");
    ok(&["compare", "--model", s(&model), "--obs", s(&obs), "--partition", "trivial", "--out", s(&out)]);
    let rows = io::load_compare_csv(&out).unwrap();
    assert_eq!(rows.len(), 21 * 4);
    for r in rows {
        assert!(r.filter_ltv < 1e-12 && r.smoother_ltv < 1e-12, "{r:?}");
    }
}

#[test]
fn filter_and_smooth_write_normalized_marginals() {
    let dir = setup(10);
    let model = dir.path().join("model.toml");
    let obs = dir.path().join("sim/observations.csv");
    for (cmd, part) in [("filter", "singleton"), ("smooth", "0,1;2,3")] {
        let out = dir.path().join(format!("{cmd}.csv"));
        ok(&[cmd, "--model", s(&model), "--obs", s(&obs), "--partition", part, "-m", "1", "--out", s(&out)]);
        let tables = io::load_marginals_csv(&out).unwrap();
        assert_eq!(tables.len(), 11);
        for block in tables.iter().flatten() {
            assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn fit_trace_is_monotone_up_to_slack_and_model_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.toml");
    let text = MODEL
        .replace("num_variables = 4", "num_variables = 3")
        .replace("c = 1.0", "c = 2.0")
        .replace("sigma2 = 1.0", "sigma2 = 4.0");
    std::fs::write(&model, text).unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--model", s(&model), "--steps", "200", "--seed", "43", "--out", s(&sim)]);
    let obs = sim.join("observations.csv");
    let out = dir.path().join("fit");
    ok(&[
        "fit", "--model", s(&model), "--obs", s(&obs), "--partition", "trivial", "-m", "1", "--inits", "2", "--seed", "1",
        "--max-iterations", "60", "--out", s(&out),
    ]);
    for i in 0..2 {
        let trace = io::load_trace_csv(&out.join(format!("trace_{i}.csv"))).unwrap();
        assert!(trace.len() >= 2);
        for w in trace.windows(2) {
            let (a, b) = (w[0].surrogate_log_likelihood, w[1].surrogate_log_likelihood);
            assert!(b >= a - 1e-6, "iteration {}: {a} -> {b}", w[1].iteration);
        }
    }
    let fitted = io::load_model(&out.join("fitted_model.toml")).unwrap();
    assert_eq!(fitted.num_variables(), 3);
    assert!(fitted.emission().variance() > 0.0);
}

#[test]
fn forecast_writes_both_series() {
    let dir = setup(12);
    let model = dir.path().join("model.toml");
    let obs = dir.path().join("sim/observations.csv");
    let out = dir.path().join("means.csv");
    let stdout = ok(&["forecast", "--model", s(&model), "--obs", s(&obs), "--out", s(&out)]);
    assert!(stdout.contains("forecast_rmse="));
    let rows = io::load_means_csv(&out).unwrap();
    let smoothed = rows.iter().filter(|r| r.kind == fhmm_core::forecast::MeanKind::Smoothed).count();
    assert_eq!(smoothed, 12 * 3);
    assert!(rows.iter().filter(|r| r.t <= 12).all(|r| r.observed.is_some()));
}

#[test]
fn bench_and_graph_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    ok(&["bench", "--sizes", "4,5", "--radii", "0,1", "--steps", "10", "--exact-limit", "4", "--out", s(&out)]);
    let rows = io::load_bench_csv(&out).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().filter(|r| r.method == "exact").count(), 1);

    std::fs::write(dir.path().join("model.toml"), MODEL).unwrap();
    let stats = ok(&["graph-stats", "--model", s(&dir.path().join("model.toml")), "-m", "0"]);
    for line in ["num_variables=4", "num_factors=3", "upsilon=2", "upsilon2=3", "n=3"] {
        assert!(stats.lines().any(|l| l == line), "missing {line} in {stats}");
    }
}
