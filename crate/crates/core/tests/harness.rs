use std::path::PathBuf;

use greennet_core::harness::{
    emit_outputs, read_detail_csv, run_experiment, tiny_scenario, write_detail_csv, OutputPaths, RunConfig, SweepAxis,
    TrialStatus, DETAIL_HEADER,
};
use greennet_core::Method;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("greennet-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn tiny_run(trials: usize) -> RunConfig {
    let mut cfg = RunConfig { scenario: tiny_scenario(), ..Default::default() };
    cfg.experiment.values = vec![1.0, 4.0];
    cfg.experiment.trials = trials;
    cfg.experiment.seed = 99;
    cfg
}

#[test]
fn experiments_are_deterministic() {
    let cfg = tiny_run(3);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.rows.len(), 2 * 3 * 3);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.total_power_w.to_bits(), y.total_power_w.to_bits());
        assert_eq!(x.iterations, y.iterations);
    }
    assert_eq!(a.trajectories, b.trajectories);
}

#[test]
fn trials_do_not_depend_on_the_trial_count() {
    let short = run_experiment(&tiny_run(2)).unwrap();
    let long = run_experiment(&tiny_run(4)).unwrap();
    for r in &short.rows {
        let twin = long
            .rows
            .iter()
            .find(|x| x.trial == r.trial && x.method == r.method && x.sweep_value == r.sweep_value)
            .unwrap();
        assert_eq!(format!("{r:?}"), format!("{twin:?}"));
    }
}

#[test]
fn rows_are_ordered_and_complete() {
    let table = run_experiment(&tiny_run(2)).unwrap();
    let keys: Vec<(f64, usize, Method)> = table.rows.iter().map(|r| (r.sweep_value, r.trial, r.method)).collect();
    let mut expected = Vec::new();
    for v in [1.0, 4.0] {
        for t in 0..2 {
            for m in Method::ALL {
                expected.push((v, t, m));
            }
        }
    }
    assert_eq!(keys, expected);
    assert!(!table.has_errors());
    for r in table.rows.iter().filter(|r| r.status.is_solved()) {
        assert!(r.max_rate_violation_rel <= 1e-6);
        assert_eq!(r.wall_ms, 0.0);
    }
}

#[test]
fn outputs_round_trip_through_disk() {
    let dir = scratch("outputs");
    let mut cfg = tiny_run(2);
    cfg.experiment.outputs = OutputPaths::in_dir(&dir);
    let table = run_experiment(&cfg).unwrap();
    emit_outputs(&table, &cfg.experiment).unwrap();
    let paths = &cfg.experiment.outputs;
    let detail = std::fs::read_to_string(paths.detail_csv.as_ref().unwrap()).unwrap();
    assert_eq!(detail.lines().next().unwrap(), DETAIL_HEADER.join(","));
    assert_eq!(format!("{:?}", read_detail_csv(detail.as_bytes()).unwrap()), format!("{:?}", table.rows));
    let summary = std::fs::read_to_string(paths.summary_csv.as_ref().unwrap()).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
    for svg in [&paths.power_svg, &paths.trajectory_svg] {
        assert!(std::fs::read_to_string(svg.as_ref().unwrap()).unwrap().starts_with("<svg"));
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn detail_csv_keeps_failed_rows() {
    let mut cfg = tiny_run(1);
    cfg.experiment.values = vec![1e6];
    let table = run_experiment(&cfg).unwrap();
    assert!(table.rows.iter().all(|r| r.status == TrialStatus::Infeasible));
    let mut buf = Vec::new();
    write_detail_csv(&table.rows, &mut buf).unwrap();
    let back = read_detail_csv(buf.as_slice()).unwrap();
    assert!(back.iter().all(|r| r.status == TrialStatus::Infeasible && r.total_power_w.is_nan()));
}

#[test]
fn config_round_trips_and_fills_defaults() {
    let cfg = RunConfig::from_json(r#"{"experiment": {"axis": "epsilon", "values": [0.001, 0.1]}}"#).unwrap();
    assert_eq!(cfg.experiment.axis, SweepAxis::Epsilon);
    assert_eq!(cfg.experiment.trials, 1);
    assert_eq!(cfg.scenario, RunConfig::default().scenario);
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    assert!(RunConfig::from_json(r#"{"experiment": {"trials": 0}}"#).is_err());
    assert!(RunConfig::from_json(r#"{"experiment": {"axis": "epsilon", "values": [-1.0]}}"#).is_err());
}

#[test]
fn demand_sweep_raises_transmit_power_on_tiny_instances() {
    let mut cfg = tiny_run(4);
    cfg.experiment.values = vec![0.5, 2.0, 8.0];
    cfg.experiment.methods = vec![Method::MinTpower];
    let table = run_experiment(&cfg).unwrap();
    for t in 0..4 {
        let powers: Vec<f64> = table.rows.iter().filter(|r| r.trial == t).map(|r| r.transmit_power_w).collect();
        assert!(powers.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6) || w[1].is_nan()), "trial {t}: {powers:?}");
    }
}
