use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn efcart(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efcart"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small synthetic dataset and its config into a fresh directory.
fn synth() -> TempDir {
    let dir = TempDir::new().unwrap();
    let o = efcart(
        dir.path(),
        &[
            "synth", "--months", "84", "--assets", "4", "--seed", "5", "--out", ".",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn backtest_writes_all_outputs_and_is_reproducible() {
    let dir = synth();
    let o = efcart(dir.path(), &["backtest", "--config", "config.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("cart_tangency"));
    for f in ["equity.csv", "weights.csv", "forecasts.csv", "metrics.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "missing {f}");
    }
    let first = std::fs::read(dir.path().join("out/metrics.json")).unwrap();
    let o = efcart(
        dir.path(),
        &["backtest", "--config", "config.toml", "--out", "again"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let second = std::fs::read(dir.path().join("again/metrics.json")).unwrap();
    assert_eq!(first, second);
    let metrics: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(metrics["seed"], 5);
}

#[test]
fn missing_factor_file_exits_with_code_two() {
    let dir = synth();
    std::fs::remove_file(dir.path().join("data/factors.csv")).unwrap();
    let o = efcart(dir.path(), &["backtest", "--config", "config.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("factors.csv"), "{}", stderr(&o));
    let o = efcart(dir.path(), &["backtest", "--config", "nope.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn frontier_prints_consistent_coefficients() {
    let dir = synth();
    let o = efcart(
        dir.path(),
        &["frontier", "--config", "config.toml", "--month", "2001-06"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let value = |key: &str| -> f64 {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(key))
            .unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    let (a, b, c) = (value("A"), value("B"), value("C"));
    assert!(((value("u") - ((a * c - b * b) / a).sqrt()) / value("u")).abs() < 1e-8);
    assert!(((value("product") - value("u")) / value("u")).abs() < 1e-8);
    assert!(((value("sigma_mvp") - 1.0 / a.sqrt()) / value("sigma_mvp")).abs() < 1e-8);

    let o = efcart(
        dir.path(),
        &["frontier", "--config", "config.toml", "--month", "1990-01"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("1990-01"));

    let o = efcart(dir.path(), &["frontier", "--config", "config.toml"]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/frontier.csv")).unwrap();
    assert!(csv.lines().count() > 80);
}

#[test]
fn tree_prints_a_shallow_model_for_out_of_sample_months() {
    let dir = synth();
    let args = ["tree", "--config", "config.toml", "--month", "2004-03"];
    let o = efcart(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    // a depth-two tree has at most seven nodes, plus the forecast line
    assert!(text.lines().count() <= 8, "{text}");
    assert!(text.contains("forecast 2004-03"));
    assert_eq!(stdout(&efcart(dir.path(), &args)), text);

    let o = efcart(
        dir.path(),
        &["tree", "--config", "config.toml", "--month", "2001-03"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no model for month"));
}
