use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::optimizer::{solve, Method, ProblemInstance, SolveStatus, SolverReport};
use crate::scenario::generate_scenario;

/// Outcome of one (sweep value, trial, method) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Converged,
    MaxIter,
    Infeasible,
    /// The trial could not be run at all.
    Error,
}

impl TrialStatus {
    pub const ALL: [TrialStatus; 4] =
        [TrialStatus::Converged, TrialStatus::MaxIter, TrialStatus::Infeasible, TrialStatus::Error];

    pub fn name(&self) -> &'static str {
        match self {
            TrialStatus::Converged => "converged",
            TrialStatus::MaxIter => "max_iter",
            TrialStatus::Infeasible => "infeasible",
            TrialStatus::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TrialStatus::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown trial status '{s}'")))
    }

    /// Whether the row carries a usable power vector.
    pub fn is_solved(&self) -> bool {
        matches!(self, TrialStatus::Converged | TrialStatus::MaxIter)
    }
}

impl From<SolveStatus> for TrialStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => TrialStatus::Converged,
            SolveStatus::MaxIter => TrialStatus::MaxIter,
            SolveStatus::Infeasible => TrialStatus::Infeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub sweep_value: f64,
    pub trial: usize,
    pub method: Method,
    pub status: TrialStatus,
    pub total_power_w: f64,
    pub transmit_power_w: f64,
    pub active_macro_bs: usize,
    pub active_pico_bs: usize,
    pub active_bs_fc_groups: usize,
    pub max_rate_violation_rel: f64,
    pub iterations: usize,
    pub wall_ms: f64,
}

impl DetailRow {
    fn failed(sweep_value: f64, trial: usize, method: Method) -> Self {
        Self {
            sweep_value,
            trial,
            method,
            status: TrialStatus::Error,
            total_power_w: f64::NAN,
            transmit_power_w: f64::NAN,
            active_macro_bs: 0,
            active_pico_bs: 0,
            active_bs_fc_groups: 0,
            max_rate_violation_rel: f64::NAN,
            iterations: 0,
            wall_ms: 0.0,
        }
    }

    fn from_report(sweep_value: f64, trial: usize, r: &SolverReport, wall_ms: f64) -> Self {
        Self {
            sweep_value,
            trial,
            method: r.method,
            status: r.status.into(),
            total_power_w: r.total_power_exact,
            transmit_power_w: r.transmit_power_w,
            active_macro_bs: r.active_groups.active_macro_bs,
            active_pico_bs: r.active_groups.active_pico_bs,
            active_bs_fc_groups: r.active_groups.active_bs_fc_groups,
            max_rate_violation_rel: r.max_rate_violation_rel,
            iterations: r.iterations,
            wall_ms,
        }
    }
}

/// Smooth objective per outer iteration of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sweep_value: f64,
    pub trial: usize,
    pub method: Method,
    pub objective: Vec<f64>,
}

/// Means and standard deviations over the solved trials of one
/// (sweep value, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub method: Method,
    pub trials: usize,
    pub solved: usize,
    pub errors: usize,
    pub mean_total_power_w: f64,
    pub std_total_power_w: f64,
    pub mean_transmit_power_w: f64,
    pub std_transmit_power_w: f64,
    pub mean_active_macro_bs: f64,
    pub mean_active_pico_bs: f64,
    pub mean_active_bs_fc_groups: f64,
    pub mean_iterations: f64,
}

impl AggregateRow {
    /// Standard error of the mean total power.
    pub fn sem_total_power_w(&self) -> f64 {
        self.std_total_power_w / (self.solved as f64).sqrt()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<DetailRow>,
    pub trajectories: Vec<Trajectory>,
}

/// Mean and sample standard deviation; `(NaN, NaN)` for no data and a zero
/// deviation for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl ResultTable {
    /// Whether any trial failed to run.
    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(|r| r.status == TrialStatus::Error)
    }

    /// One row per (sweep value, method) in first-appearance order.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut keys: Vec<(f64, Method)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|(v, m)| v.to_bits() == r.sweep_value.to_bits() && *m == r.method) {
                keys.push((r.sweep_value, r.method));
            }
        }
        keys.into_iter()
            .map(|(value, method)| {
                let cell: Vec<&DetailRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.sweep_value.to_bits() == value.to_bits() && r.method == method)
                    .collect();
                let solved: Vec<&DetailRow> = cell.iter().copied().filter(|r| r.status.is_solved()).collect();
                let col = |f: fn(&DetailRow) -> f64| solved.iter().map(|r| f(r)).collect::<Vec<_>>();
                let (mean_total, std_total) = mean_std(&col(|r| r.total_power_w));
                let (mean_tx, std_tx) = mean_std(&col(|r| r.transmit_power_w));
                AggregateRow {
                    sweep_value: value,
                    method,
                    trials: cell.len(),
                    solved: solved.len(),
                    errors: cell.iter().filter(|r| r.status == TrialStatus::Error).count(),
                    mean_total_power_w: mean_total,
                    std_total_power_w: std_total,
                    mean_transmit_power_w: mean_tx,
                    std_transmit_power_w: std_tx,
                    mean_active_macro_bs: mean_std(&col(|r| r.active_macro_bs as f64)).0,
                    mean_active_pico_bs: mean_std(&col(|r| r.active_pico_bs as f64)).0,
                    mean_active_bs_fc_groups: mean_std(&col(|r| r.active_bs_fc_groups as f64)).0,
                    mean_iterations: mean_std(&col(|r| r.iterations as f64)).0,
                }
            })
            .collect()
    }
}

/// Layout seed of a trial. It does not depend on the sweep value, so every
/// sweep value sees the same drop of BSs and UEs.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

struct TrialOutput {
    rows: Vec<DetailRow>,
    trajectories: Vec<Trajectory>,
}

fn run_trial(cfg: &RunConfig, value: f64, trial: usize) -> TrialOutput {
    let spec = &cfg.experiment;
    let mut scenario = cfg.scenario.clone();
    let mut power = cfg.power_model.clone();
    spec.axis.apply(value, &mut scenario, &mut power);
    let inst = generate_scenario(&scenario, trial_seed(spec.seed, trial))
        .and_then(|layout| ProblemInstance::from_layout(&layout, &power));
    let mut out = TrialOutput { rows: Vec::new(), trajectories: Vec::new() };
    let inst = match inst {
        Ok((inst, _)) => inst,
        Err(_) => {
            out.rows = spec.methods.iter().map(|m| DetailRow::failed(value, trial, *m)).collect();
            return out;
        }
    };
    for &method in &spec.methods {
        let start = Instant::now();
        let result = solve(&inst, method, &cfg.solver);
        let wall_ms = if spec.record_wall_time { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        match result {
            Ok(report) => {
                out.rows.push(DetailRow::from_report(value, trial, &report, wall_ms));
                out.trajectories.push(Trajectory {
                    sweep_value: value,
                    trial,
                    method,
                    objective: report.objective_trajectory,
                });
            }
            Err(_) => out.rows.push(DetailRow::failed(value, trial, method)),
        }
    }
    out
}

/// Runs every (sweep value, trial, method) combination. Trials run in
/// parallel; rows come back ordered by sweep value, trial and method.
pub fn run_experiment(cfg: &RunConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let spec = &cfg.experiment;
    let jobs: Vec<(f64, usize)> =
        spec.values.iter().flat_map(|&v| (0..spec.trials).map(move |t| (v, t))).collect();
    let outputs: Vec<TrialOutput> = jobs.par_iter().map(|&(v, t)| run_trial(cfg, v, t)).collect();
    let mut table = ResultTable::default();
    for o in outputs {
        table.rows.extend(o.rows);
        table.trajectories.extend(o.trajectories);
    }
    Ok(table)
}
