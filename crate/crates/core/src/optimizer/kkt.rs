use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DualVariables, Method, ProblemInstance};

/// Scaled first-order optimality residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// Largest per-entry stationarity residual, each divided by the sum of
    /// the magnitudes of the terms it balances.
    pub stationarity: f64,
    /// `||r||_inf / ||grad f||_inf` for the stationarity vector `r`.
    pub stationarity_global: f64,
    /// Largest complementarity product divided by `|grad f|^T p`.
    pub complementarity: f64,
    /// Largest relative constraint violation.
    pub primal_infeasibility: f64,
    /// Magnitude of the most negative multiplier.
    pub dual_infeasibility: f64,
}

impl KktResidual {
    pub fn max_scaled(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.primal_infeasibility).max(self.dual_infeasibility)
    }
}

/// Residuals of the conditions
/// `grad f + sum_k theta_k t_k - sum_l zeta_l grad R_l - nu = 0`,
/// `zeta_l (R_l - gamma_l) = 0`, `theta_k (P_k - t_k^T p) = 0`, `nu_i p_i = 0`.
pub fn kkt_residual(p: &[f64], duals: &DualVariables, inst: &ProblemInstance, method: Method) -> KktResidual {
    let n = inst.n();
    let grad = inst.objective_gradient(method, p);
    let mut resid = grad.clone();
    let mut scale: Vec<f64> = grad.iter().map(|g| g.abs()).collect();

    let mut owner = vec![usize::MAX; n];
    for (k, idx) in inst.bs_positions.iter().enumerate() {
        for &i in idx {
            owner[i] = k;
        }
    }
    for i in 0..n {
        if owner[i] != usize::MAX {
            let th = duals.budget[owner[i]];
            resid[i] += th;
            scale[i] += th.abs();
        }
        resid[i] -= duals.nonneg[i];
        scale[i] += duals.nonneg[i].abs();
    }

    let mut comp: f64 = 0.0;
    let mut primal: f64 = 0.0;
    for l in inst.constrained_ues() {
        let z = duals.rate[l];
        let rate = inst.rate(p, l);
        if z != 0.0 {
            let gr = inst.rate_gradient(p, l);
            for i in 0..n {
                resid[i] -= z * gr[i];
                scale[i] += (z * gr[i]).abs();
            }
        }
        comp = comp.max((z * (rate - inst.demands[l])).abs());
        primal = primal.max((inst.demands[l] - rate) / inst.demands[l]);
    }
    for k in 0..inst.num_bs() {
        let used = inst.budget_usage(p, k);
        comp = comp.max((duals.budget[k] * (inst.budgets[k] - used)).abs());
        primal = primal.max((used - inst.budgets[k]) / inst.budgets[k]);
    }
    for i in 0..n {
        comp = comp.max((duals.nonneg[i] * p[i]).abs());
        if p[i] < 0.0 {
            primal = primal.max(-p[i]);
        }
    }

    let stationarity = resid
        .iter()
        .zip(&scale)
        .map(|(r, s)| if *s > 0.0 { r.abs() / s } else { r.abs() })
        .fold(0.0, f64::max);
    let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let stationarity_global = resid.iter().fold(0.0f64, |m, r| m.max(r.abs())) / gnorm.max(f64::MIN_POSITIVE);
    let work: f64 = grad.iter().zip(p).map(|(g, x)| g.abs() * x.abs()).sum();
    let complementarity = if work > 0.0 { comp / work } else { comp };
    let dual_min = duals
        .rate
        .iter()
        .chain(&duals.budget)
        .chain(&duals.nonneg)
        .fold(0.0f64, |m, v| m.min(*v));

    KktResidual {
        stationarity,
        stationarity_global,
        complementarity,
        primal_infeasibility: primal.max(0.0),
        dual_infeasibility: -dual_min,
    }
}

/// Least-squares re-estimate of the multipliers of the tight rate
/// constraints, holding the budget and nonnegativity multipliers fixed.
///
/// Barrier multipliers `1/(t slack)` inherit the cancellation error of
/// evaluating a nearly tight rate row; the fit recovers them from the
/// stationarity equations instead. The estimate replaces the barrier values
/// only when it lowers the scaled stationarity residual.
pub fn refine_rate_multipliers(p: &[f64], duals: &DualVariables, inst: &ProblemInstance, method: Method) -> DualVariables {
    let n = inst.n();
    let tight: Vec<usize> = inst
        .constrained_ues()
        .into_iter()
        .filter(|&l| inst.rate(p, l) - inst.demands[l] <= 1e-6 * inst.demands[l])
        .collect();
    if tight.is_empty() {
        return duals.clone();
    }
    let grad = inst.objective_gradient(method, p);
    let mut owner = vec![usize::MAX; n];
    for (k, idx) in inst.bs_positions.iter().enumerate() {
        for &i in idx {
            owner[i] = k;
        }
    }
    let mut rhs: Vec<f64> = (0..n)
        .map(|i| grad[i] + owner.get(i).filter(|&&k| k != usize::MAX).map_or(0.0, |&k| duals.budget[k]) - duals.nonneg[i])
        .collect();
    let mut scale: Vec<f64> = (0..n)
        .map(|i| {
            grad[i].abs()
                + owner.get(i).filter(|&&k| k != usize::MAX).map_or(0.0, |&k| duals.budget[k].abs())
                + duals.nonneg[i].abs()
        })
        .collect();
    let mut cols = DMatrix::zeros(n, tight.len());
    for l in inst.constrained_ues() {
        let gr = inst.rate_gradient(p, l);
        for i in 0..n {
            scale[i] += (duals.rate[l] * gr[i]).abs();
        }
        match tight.iter().position(|&t| t == l) {
            Some(j) => cols.set_column(j, &DVector::from_vec(gr)),
            None => (0..n).for_each(|i| rhs[i] -= duals.rate[l] * gr[i]),
        }
    }
    for i in 0..n {
        let w = if scale[i] > 0.0 { 1.0 / scale[i] } else { 1.0 };
        rhs[i] *= w;
        cols.row_mut(i).scale_mut(w);
    }
    let Ok(fit) = cols.svd(true, true).solve(&DVector::from_vec(rhs), 1e-14) else {
        return duals.clone();
    };
    let mut refined = duals.clone();
    for (j, &l) in tight.iter().enumerate() {
        refined.rate[l] = fit[j].max(0.0);
    }
    let before = kkt_residual(p, duals, inst, method);
    let after = kkt_residual(p, &refined, inst, method);
    if after.max_scaled() < before.max_scaled() {
        refined
    } else {
        duals.clone()
    }
}
