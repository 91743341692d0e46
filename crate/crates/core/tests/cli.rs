use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_dro-portfolio");

fn fixture_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/two_regime.csv")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dro-portfolio-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_defaults_pass() {
    let dir = scratch("verify");
    let out = run(&["verify", "--no-timestamp", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&dir.join("verify.json"));
    assert_eq!(report["command"], "verify");
    assert_eq!(report["result"]["passed"], true);
}

#[test]
fn injected_fault_exits_one() {
    let dir = scratch("fault");
    let out = run(&[
        "verify",
        "--suites",
        "partition",
        "--inject-fault",
        "flip-hyperplane-sign",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("hyperplane_overestimate"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = scratch("usage");
    let d = dir.to_str().unwrap();
    assert_eq!(code(&run(&["verify", "--suites", "", "--out", d])), 2);
    assert_eq!(code(&run(&["verify", "--suites", "nonsense", "--out", d])), 2);
    assert_eq!(code(&run(&["solve", "--out", d])), 2);
    assert_eq!(code(&run(&["solve", "--data", "/definitely/not/here.csv", "--out", d])), 2);
    assert_eq!(code(&run(&["partition", "--eps-x", "-1", "--out", d])), 2);
    assert_eq!(code(&run(&["partition", "--sweep", "colour=1,2", "--out", d])), 2);
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"strategy": {"train_window": 126, "rebalance_every": 63, "leverage": 1.5, "typo": 1}}"#).unwrap();
    assert_eq!(code(&run(&["--config", bad.to_str().unwrap(), "partition", "--out", d])), 2);
}

#[test]
fn partition_output_is_deterministic() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    for dir in [&a, &b] {
        let out = run(&["partition", "--no-timestamp", "--seed", "3", "--out", dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
    }
    let left = fs::read(a.join("partition.json")).unwrap();
    assert_eq!(left, fs::read(b.join("partition.json")).unwrap());
    let report = read_json(&a.join("partition.json"));
    assert_eq!(report["seed"], 3);
    assert!(report.get("generated_at").is_none());
    assert!(report["result"]["sup_x"].as_f64().unwrap() <= 1.02e-5);
}

#[test]
fn degenerate_box_gives_single_plane() {
    let dir = scratch("degenerate");
    let config = dir.join("config.json");
    fs::write(&config, r#"{"partition": {"x_box": [0.1, 0.1], "c_box": [0.0, 0.02]}}"#).unwrap();
    let out = run(&["--config", config.to_str().unwrap(), "partition", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report = read_json(&dir.join("partition.json"));
    assert_eq!(report["result"]["M_x"], 1);
    assert_eq!(report["result"]["sup_x"].as_f64().unwrap(), 0.0);
}

#[test]
fn gamma_sweep_objectives_decrease() {
    let dir = scratch("sweep");
    let data = fixture_csv();
    let out = run(&[
        "solve",
        "--data",
        data.to_str().unwrap(),
        "--sweep",
        "gamma=0,0.05,0.25,1",
        "--no-timestamp",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("solve_sweep.csv")).unwrap();
    let objectives: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(objectives.len(), 4);
    assert!(objectives.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{objectives:?}");
    assert!(dir.join("solve_gamma_0.25.json").exists());
}

#[test]
fn backtest_with_sample_config() {
    let dir = scratch("backtest");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/example_config.json");
    let out = run(&["--config", config.to_str().unwrap(), "backtest", "--no-timestamp", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.join("backtest_report.json"));
    let metrics = &report["result"]["report"];
    for key in [
        "cumulative_return",
        "max_drawdown",
        "average_turnover_rate",
        "average_invested_weight",
        "average_max_asset_weight",
        "final_value",
    ] {
        assert!(metrics[key].as_f64().is_some_and(f64::is_finite), "{key}: {}", metrics[key]);
    }
    assert!(metrics.get("average_running_time_sec").is_none());
    let path = fs::read_to_string(dir.join("backtest_path.csv")).unwrap();
    assert!(path.starts_with("date,value,invested_weight\n"));
    assert!(dir.join("benchmark_equal_weight_path.csv").exists());
    assert!(dir.join("benchmarks.json").exists());
}
