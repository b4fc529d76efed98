use std::path::PathBuf;
use std::process::{Command, Output};

fn greennet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greennet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("greennet-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// A configuration file for the one-macro, one-pico, two-UE scenario.
fn tiny_config(dir: &PathBuf) -> PathBuf {
    let mut cfg: serde_json::Value = serde_json::from_str(&stdout(&greennet(&["config"]))).unwrap();
    cfg["scenario"]["macro_cells"] = 1.into();
    cfg["scenario"]["picos_per_cell"] = 1.into();
    cfg["scenario"]["ues_per_cell"] = 2.into();
    cfg["scenario"]["bands"] = serde_json::json!([{ "low_hz": 1.9e9, "high_hz": 1.92e9 }]);
    cfg["experiment"]["values"] = serde_json::json!([1.0, 2.0]);
    cfg["experiment"]["trials"] = 2.into();
    let path = dir.join("tiny.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn config_prints_a_loadable_document() {
    let out = greennet(&["config"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["experiment"]["axis"], "rate_demand");
    assert!(v["solver"].is_object());
}

#[test]
fn solve_writes_reports() {
    let dir = scratch("solve");
    let cfg = tiny_config(&dir);
    let json = dir.join("reports.json");
    let out = greennet(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--method",
        "log_sparse",
        "--method",
        "min_tpower",
        "--out",
        json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("log_sparse") && text.contains("min_tpower") && !text.contains("l21"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["seed"], 3);
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_writes_every_artifact() {
    let dir = scratch("sweep");
    let cfg = tiny_config(&dir);
    let out_dir = dir.join("run");
    let out = greennet(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["config.json", "detail.csv", "summary.csv", "power.svg", "trajectories.svg"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let detail = std::fs::read_to_string(out_dir.join("detail.csv")).unwrap();
    assert_eq!(detail.lines().count(), 1 + 2 * 2 * 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweeps_are_reproducible() {
    let dir = scratch("repro");
    let cfg = tiny_config(&dir);
    let run = |name: &str| {
        let d = dir.join(name);
        let out = greennet(&["sweep", "--config", cfg.to_str().unwrap(), "--trials", "1", "--out", d.to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read(d.join("detail.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn oracle_reports_each_instance() {
    let out = greennet(&["oracle", "--trials", "2"]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3, "{text}");
}

#[test]
fn bad_input_is_rejected() {
    assert!(!greennet(&["solve", "--method", "l1"]).status.success());
    assert!(!greennet(&["sweep", "--config", "/nonexistent/cfg.json"]).status.success());
    assert!(!greennet(&["frobnicate"]).status.success());
}
