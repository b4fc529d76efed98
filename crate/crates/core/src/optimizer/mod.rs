//! Successive convex approximation for the group-sparse power control
//! problem, its baselines, and KKT certification.

mod barrier;
mod instance;
mod kkt;
mod linalg;
mod restricted;
mod sca;

use serde::{Deserialize, Serialize};

pub use barrier::BarrierSettings;
pub use instance::{Group, Method, ProblemInstance};
pub use kkt::{kkt_residual, refine_rate_multipliers, KktResidual};
pub use restricted::{enumerate_restricted_optimum, Restriction, RestrictedOptimum};
pub use sca::{
    find_feasible_start, sca_solve, sca_solve_with, solve, solve_inner, solve_l21, solve_min_transmit_power,
};

use crate::error::{Error, Result};
use crate::scenario::BsClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Outer stop on `||p_i - p_{i-1}||_2`, in Watts.
    pub eps_th_w: f64,
    pub max_outer: usize,
    pub barrier: BarrierSettings,
    /// Groups whose total power falls below this many Watts are switched off;
    /// `None` uses `1e-12 * min_k P_max,k`.
    pub group_off_threshold_w: Option<f64>,
    /// Re-solve for minimum transmit power on the final active support.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_th_w: 1e-13,
            max_outer: 50,
            barrier: BarrierSettings::default(),
            group_off_threshold_w: None,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.barrier;
        let positive = [self.eps_th_w, b.mu - 1.0, b.gap_rel, b.gap_abs, b.newton_tol, b.armijo, b.backtrack];
        if positive.iter().any(|v| !(*v > 0.0)) || b.backtrack >= 1.0 || b.armijo >= 0.5 {
            return Err(Error::Config("solver tolerances must be positive (mu > 1, backtrack < 1, armijo < 0.5)".into()));
        }
        if self.max_outer == 0 || b.max_newton == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if let Some(t) = self.group_off_threshold_w {
            if !(t > 0.0) {
                return Err(Error::Config("group_off_threshold_w must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn group_off_threshold(&self, inst: &ProblemInstance) -> f64 {
        self.group_off_threshold_w
            .unwrap_or_else(|| 1e-12 * inst.budgets.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [SolveStatus::Converged, SolveStatus::MaxIter, SolveStatus::Infeasible]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown status '{s}'")))
    }
}

/// Multipliers of the rate (per UE, per bit/s), budget (per BS) and
/// nonnegativity (per entry) constraints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DualVariables {
    pub rate: Vec<f64>,
    pub budget: Vec<f64>,
    pub nonneg: Vec<f64>,
}

impl DualVariables {
    pub fn zeros(inst: &ProblemInstance) -> Self {
        Self { rate: vec![0.0; inst.num_ues()], budget: vec![0.0; inst.num_bs()], nonneg: vec![0.0; inst.n()] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActiveGroups {
    /// Activity of each (BS, carrier) group, BS-major.
    pub bs_fc: Vec<bool>,
    pub bs: Vec<bool>,
    pub active_macro_bs: usize,
    pub active_pico_bs: usize,
    pub active_bs_fc_groups: usize,
    /// Number of active (UE, carrier) pairs.
    pub active_ue_fc: usize,
}

impl ActiveGroups {
    pub fn of(inst: &ProblemInstance, p: &[f64]) -> Self {
        let bs_fc: Vec<bool> = inst.groups.iter().map(|g| g.positions.iter().any(|&i| p[i] != 0.0)).collect();
        let mut bs = vec![false; inst.num_bs()];
        for (g, on) in inst.groups.iter().zip(&bs_fc) {
            bs[g.bs] |= *on;
        }
        let count = |class| (0..bs.len()).filter(|&k| bs[k] && inst.bs_class[k] == class).count();
        let mut ue_fc = std::collections::BTreeSet::new();
        for (i, l) in inst.links.iter().enumerate() {
            if p[i] != 0.0 {
                ue_fc.insert((l.ue, l.fc));
            }
        }
        Self {
            active_macro_bs: count(BsClass::Macro),
            active_pico_bs: count(BsClass::Pico),
            active_bs_fc_groups: bs_fc.iter().filter(|v| **v).count(),
            active_ue_fc: ue_fc.len(),
            bs_fc,
            bs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: Method,
    pub status: SolveStatus,
    /// Final power vector after switching off residual groups and polishing.
    pub p_star: Vec<f64>,
    /// Last SCA iterate, the point certified by `kkt`.
    pub stationary_point: Vec<f64>,
    /// Smooth objective at the start point and after every outer iteration.
    pub objective_trajectory: Vec<f64>,
    pub duals: DualVariables,
    pub kkt: Option<KktResidual>,
    /// Multipliers of the polishing solve at `p_star`, when one ran.
    pub polish_duals: Option<DualVariables>,
    pub achieved_rates: Vec<f64>,
    pub active_groups: ActiveGroups,
    pub total_power_exact: f64,
    /// Radiated transmit power `1^T p` in Watts.
    pub transmit_power_w: f64,
    pub max_rate_violation_rel: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub dropped_ues: Vec<usize>,
}
