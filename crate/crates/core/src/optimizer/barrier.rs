//! Log-barrier interior point method for the convex SCA subproblems.
//!
//! Variables are ordered carrier-major so that each carrier's entries form
//! one contiguous Hessian block. Constraints are
//!
//! * `x >= 0`,
//! * per-BS budgets `sum_{i in idx} x_i <= cap`,
//! * rate rows `sum_f c_f ln(1 + a_f^T x_f) + l^T x + k >= 0` (concave).
//!
//! The objective is linear plus optional weighted group two-norms.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::BlockSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierSettings {
    /// Initial barrier weight; derived from the starting objective when absent.
    pub t_init: Option<f64>,
    pub mu: f64,
    /// Relative duality-measure target `m/t <= gap_rel * |objective|`.
    pub gap_rel: f64,
    /// Absolute floor on the duality-measure target.
    pub gap_abs: f64,
    /// Newton decrement threshold `lambda^2 / 2` ending a centering stage.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            t_init: None,
            mu: 10.0,
            gap_rel: 1e-8,
            gap_abs: 1e-14,
            newton_tol: 1e-9,
            max_newton: 100,
            armijo: 0.01,
            backtrack: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LogTerm {
    pub block: usize,
    pub coef: f64,
    pub gain: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct RateRow {
    pub terms: Vec<LogTerm>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BudgetRow {
    pub idx: Vec<usize>,
    pub cap: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NormGroup {
    pub idx: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct InnerProblem {
    pub n: usize,
    pub blocks: Vec<Range<usize>>,
    pub linear: Vec<f64>,
    pub norms: Vec<NormGroup>,
    pub rates: Vec<RateRow>,
    pub budgets: Vec<BudgetRow>,
}

#[derive(Debug, Clone)]
pub(crate) struct InnerSolution {
    pub x: Vec<f64>,
    pub rate_duals: Vec<f64>,
    pub budget_duals: Vec<f64>,
    pub nonneg_duals: Vec<f64>,
    pub newton_steps: usize,
    /// Final value of the phase-I slack, when one was used.
    pub slack: Option<f64>,
}

/// What the solver does with the phase-I slack variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Phase {
    /// Minimize the objective from a strictly feasible point.
    Optimize,
    /// Minimize the slack `s` in `row + s >= 0`; stop early once `s < -margin`.
    Feasibility { stop_below: Option<f64> },
}

const REFINE_STEPS: usize = 6;

struct Point<'a> {
    prob: &'a InnerProblem,
    x: &'a [f64],
    s: Option<f64>,
}

impl InnerProblem {
    pub fn row_value(&self, row: &RateRow, x: &[f64]) -> f64 {
        let mut v = row.constant;
        for term in &row.terms {
            v += term.coef * self.block_dot(term, x).ln_1p();
        }
        v + dot(&row.linear, x)
    }

    fn block_dot(&self, term: &LogTerm, x: &[f64]) -> f64 {
        dot(&term.gain, &x[self.blocks[term.block].clone()])
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = dot(&self.linear, x);
        for g in &self.norms {
            v += g.weight * g.idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
        }
        v
    }

    pub fn budget_slack(&self, b: &BudgetRow, x: &[f64]) -> f64 {
        b.cap - b.idx.iter().map(|&i| x[i]).sum::<f64>()
    }

    fn num_constraints(&self) -> usize {
        self.n + self.rates.len() + self.budgets.len()
    }

    fn pinned_blocks(&self) -> bool {
        self.blocks.len() > 1
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Point<'_> {
    /// `t f0 + phi`, or `None` outside the barrier domain.
    fn merit(&self, t: f64) -> Option<f64> {
        let prob = self.prob;
        let mut phi = 0.0;
        for &v in self.x {
            if !(v > 0.0) {
                return None;
            }
            phi -= v.ln();
        }
        for b in &prob.budgets {
            let sl = prob.budget_slack(b, self.x);
            if !(sl > 0.0) {
                return None;
            }
            phi -= sl.ln();
        }
        for row in &prob.rates {
            let g = prob.row_value(row, self.x) + self.s.unwrap_or(0.0);
            if !(g > 0.0) {
                return None;
            }
            phi -= g.ln();
        }
        let f0 = match self.s {
            Some(s) => s,
            None => prob.objective(self.x),
        };
        Some(t * f0 + phi)
    }

    /// Gradient and Hessian of `t f0 + phi`.
    fn newton_system(&self, t: f64) -> (DVector<f64>, BlockSystem) {
        let prob = self.prob;
        let n = prob.n;
        let x = self.x;
        let phase_one = self.s.is_some();
        let dim = n + usize::from(phase_one);
        let mut grad = DVector::zeros(dim);
        let mut blocks: Vec<(usize, DMatrix<f64>)> = prob
            .blocks
            .iter()
            .map(|r| (r.start, DMatrix::zeros(r.len(), r.len())))
            .collect();
        let mut block_of = vec![0usize; n];
        for (b, r) in prob.blocks.iter().enumerate() {
            for i in r.clone() {
                block_of[i] = b;
            }
        }

        if phase_one {
            grad[n] = t;
        } else {
            for i in 0..n {
                grad[i] = t * prob.linear[i];
            }
            for g in &prob.norms {
                let norm = g.idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
                if norm <= 0.0 {
                    continue;
                }
                let b = block_of[g.idx[0]];
                let off = prob.blocks[b].start;
                let scale = t * g.weight / norm;
                for (a, &i) in g.idx.iter().enumerate() {
                    grad[i] += scale * x[i];
                    for &j in &g.idx[a..] {
                        let v = scale * ((if i == j { 1.0 } else { 0.0 }) - x[i] * x[j] / (norm * norm));
                        blocks[b].1[(i - off, j - off)] += v;
                        if i != j {
                            blocks[b].1[(j - off, i - off)] += v;
                        }
                    }
                }
            }
        }

        for i in 0..n {
            grad[i] -= 1.0 / x[i];
            let b = block_of[i];
            let off = prob.blocks[b].start;
            blocks[b].1[(i - off, i - off)] += 1.0 / (x[i] * x[i]);
        }

        let mut updates = Vec::with_capacity(prob.rates.len() + prob.budgets.len());
        let mut border_col = phase_one.then(|| DVector::zeros(n));
        let mut border_diag = 0.0;

        for budget in &prob.budgets {
            let sl = prob.budget_slack(budget, x);
            let mut u = DVector::zeros(n);
            for &i in &budget.idx {
                u[i] = 1.0;
                grad[i] += 1.0 / sl;
            }
            updates.push((1.0 / (sl * sl), u));
        }

        for row in &prob.rates {
            let g = prob.row_value(row, x) + self.s.unwrap_or(0.0);
            let mut u = DVector::from_column_slice(&row.linear);
            for term in &row.terms {
                let r = prob.blocks[term.block].clone();
                let den = 1.0 + prob.block_dot(term, x);
                let c = term.coef / den;
                for (j, i) in r.clone().enumerate() {
                    u[i] += c * term.gain[j];
                }
                // -grad^2 g / g is PSD and stays inside the carrier block.
                let w = term.coef / (den * den * g);
                let gain = DVector::from_column_slice(&term.gain);
                blocks[term.block].1.ger(w, &gain, &gain, 1.0);
            }
            for i in 0..n {
                grad[i] -= u[i] / g;
            }
            let w = 1.0 / (g * g);
            if let Some(col) = border_col.as_mut() {
                grad[n] -= 1.0 / g;
                col.axpy(w, &u, 1.0);
                border_diag += w;
            }
            updates.push((w, u));
        }

        let border = border_col.map(|c| (c, border_diag));
        (grad, BlockSystem { n, blocks, updates, border })
    }

    fn max_step(&self, dx: &[f64]) -> f64 {
        let mut smax = f64::INFINITY;
        for (v, d) in self.x.iter().zip(dx) {
            if *d < 0.0 {
                smax = smax.min(-v / d);
            }
        }
        for b in &self.prob.budgets {
            let rate: f64 = b.idx.iter().map(|&i| dx[i]).sum();
            if rate > 0.0 {
                smax = smax.min(self.prob.budget_slack(b, self.x) / rate);
            }
        }
        smax
    }
}

fn solve_system(sys: &BlockSystem, rhs: &DVector<f64>, structured: bool) -> Option<DVector<f64>> {
    if structured {
        if let Some(x) = sys.solve(rhs) {
            if (sys.apply(&x) - rhs).amax() <= 1e-8 * rhs.amax() {
                return Some(x);
            }
        }
    }
    sys.solve_dense(rhs)
}

/// Runs the barrier method from a strictly feasible `x0`.
///
/// In phase I the slack starts above the worst row violation so any
/// nonnegative interior `x0` is admissible.
pub(crate) fn minimize(
    prob: &InnerProblem,
    x0: &[f64],
    phase: Phase,
    settings: &BarrierSettings,
) -> Result<InnerSolution> {
    let n = prob.n;
    let mut x = x0.to_vec();
    let mut s = match phase {
        Phase::Optimize => None,
        Phase::Feasibility { .. } => {
            let worst = prob.rates.iter().map(|r| prob.row_value(r, &x)).fold(f64::INFINITY, f64::min);
            Some((-worst).max(0.0) + 1.0)
        }
    };
    let structured = prob.pinned_blocks() && 2 * (prob.rates.len() + prob.budgets.len()) < n;
    let m = prob.num_constraints() as f64;

    let f0 = |x: &[f64], s: Option<f64>| s.unwrap_or_else(|| prob.objective(x));
    let mut t = settings.t_init.unwrap_or_else(|| m / f0(&x, s).abs().max(settings.gap_abs).max(1e-300));
    if s.is_some() {
        t = settings.t_init.unwrap_or(m);
    }
    let mut steps = 0usize;

    if (Point { prob, x: &x, s }).merit(t).is_none() {
        return Err(Error::Numerical("barrier start is not strictly feasible".into()));
    }

    loop {
        for _ in 0..settings.max_newton {
            let pt = Point { prob, x: &x, s };
            let (grad, sys) = pt.newton_system(t);
            let neg = -&grad;
            let Some(dir) = solve_system(&sys, &neg, structured) else {
                return Err(Error::Numerical("Newton system is not positive definite".into()));
            };
            let dec = -grad.dot(&dir);
            if !(dec.is_finite()) {
                return Err(Error::Numerical("non-finite Newton decrement".into()));
            }
            if dec / 2.0 <= settings.newton_tol {
                break;
            }
            let merit0 = pt.merit(t).expect("iterate stays interior");
            let slop = 1e-13 * merit0.abs().max(1.0);
            let search = |dir: &DVector<f64>, dec: f64| {
                let dx: Vec<f64> = dir.iter().take(n).copied().collect();
                let ds = s.map(|_| dir[n]);
                let mut step = (0.99 * pt.max_step(&dx)).min(1.0);
                loop {
                    let xn: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
                    let sn = s.map(|v| v + step * ds.unwrap_or(0.0));
                    if let Some(mn) = (Point { prob, x: &xn, s: sn }).merit(t) {
                        if mn <= merit0 - settings.armijo * step * dec + slop {
                            return Some((xn, sn));
                        }
                    }
                    step *= settings.backtrack;
                    if step < 1e-16 {
                        return None;
                    }
                }
            };
            let mut accepted = search(&dir, dec);
            // Damped retries, moving towards a diagonally scaled gradient step.
            let mut lambda = 1e-8;
            while accepted.is_none() && dec >= 1e-6 && lambda <= 1e4 {
                if let Some(d) = sys.solve_damped(&neg, lambda) {
                    let dd = -grad.dot(&d);
                    if dd.is_finite() && dd > 0.0 {
                        accepted = search(&d, dd);
                    }
                }
                lambda *= 100.0;
            }
            steps += 1;
            match accepted {
                Some((xn, sn)) => {
                    x = xn;
                    s = sn;
                }
                None if dec < 1e-6 => break,
                None => {
                    return Err(Error::Numerical(format!(
                        "line search failed with Newton decrement {dec:.3e} at t = {t:.3e}"
                    )))
                }
            }
            if let (Phase::Feasibility { stop_below: Some(margin) }, Some(sv)) = (phase, s) {
                if sv < -margin {
                    return Ok(finish(prob, x, s, t, steps));
                }
            }
        }
        let gap = m / t;
        let target = (settings.gap_rel * f0(&x, s).abs()).max(settings.gap_abs);
        if gap <= target {
            steps += refine_center(prob, &mut x, s, t, structured);
            return Ok(finish(prob, x, s, t, steps));
        }
        t *= settings.mu;
    }
}

/// Extra full Newton steps at the last barrier weight. The multipliers
/// `1/(t slack)` are only as accurate as the centering, and the decrement
/// test alone leaves large gradient error along stiff constraint directions.
fn refine_center(prob: &InnerProblem, x: &mut Vec<f64>, s: Option<f64>, t: f64, structured: bool) -> usize {
    let n = prob.n;
    let mut last = f64::INFINITY;
    let mut steps = 0;
    for _ in 0..REFINE_STEPS {
        let pt = Point { prob, x, s };
        let (grad, sys) = pt.newton_system(t);
        let Some(dir) = solve_system(&sys, &-&grad, structured) else { break };
        let dec = -grad.dot(&dir);
        if !(dec.is_finite() && dec > 0.0) || dec > 0.25 * last {
            break;
        }
        let xn: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + d).collect();
        let sn = s.map(|v| v + dir[n]);
        if sn.is_some() || (Point { prob, x: &xn, s: sn }).merit(t).is_none() {
            break;
        }
        *x = xn;
        last = dec;
        steps += 1;
    }
    steps
}

fn finish(prob: &InnerProblem, x: Vec<f64>, s: Option<f64>, t: f64, steps: usize) -> InnerSolution {
    let rate_duals = prob.rates.iter().map(|r| 1.0 / (t * (prob.row_value(r, &x) + s.unwrap_or(0.0)))).collect();
    let budget_duals = prob.budgets.iter().map(|b| 1.0 / (t * prob.budget_slack(b, &x))).collect();
    let nonneg_duals = x.iter().map(|v| 1.0 / (t * v)).collect();
    InnerSolution { x, rate_duals, budget_duals, nonneg_duals, newton_steps: steps, slack: s }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min c x  s.t.  ln(1 + a x) >= r,  x <= cap: optimum x = (e^r - 1)/a.
    fn scalar(r: f64, a: f64) -> InnerProblem {
        InnerProblem {
            n: 1,
            blocks: vec![0..1],
            linear: vec![2.0],
            norms: vec![],
            rates: vec![RateRow { terms: vec![LogTerm { block: 0, coef: 1.0 / r, gain: vec![a] }], linear: vec![0.0], constant: -1.0 }],
            budgets: vec![BudgetRow { idx: vec![0], cap: 1e3 }],
        }
    }

    #[test]
    fn scalar_problem_hits_closed_form() {
        let prob = scalar(2.0, 3.0);
        let sol = minimize(&prob, &[100.0], Phase::Optimize, &BarrierSettings::default()).unwrap();
        let exact = (2f64.exp() - 1.0) / 3.0;
        assert!((sol.x[0] / exact - 1.0).abs() < 1e-7, "{} vs {exact}", sol.x[0]);
        // Stationarity: c = lambda * d/dx[ln(1+ax)/r] at the optimum.
        let lam = sol.rate_duals[0];
        let deriv = 3.0 / (1.0 + 3.0 * sol.x[0]) / 2.0;
        assert!((lam * deriv / 2.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phase_one_finds_interior_point() {
        let prob = scalar(2.0, 3.0);
        let sol = minimize(&prob, &[1e-3], Phase::Feasibility { stop_below: Some(1e-3) }, &BarrierSettings::default()).unwrap();
        assert!(sol.slack.unwrap() < 0.0);
        assert!(prob.row_value(&prob.rates[0], &sol.x) > 0.0);
    }

    #[test]
    fn phase_one_reports_positive_slack_when_infeasible() {
        // ln(1 + x) / 10 >= 1 needs x = e^10 - 1, far above the cap.
        let mut prob = scalar(10.0, 1.0);
        prob.budgets[0].cap = 5.0;
        let sol = minimize(&prob, &[1.0], Phase::Feasibility { stop_below: Some(1e-9) }, &BarrierSettings::default()).unwrap();
        let best = 1.0 - (6f64).ln() / 10.0;
        assert!((sol.slack.unwrap() - best).abs() < 1e-6);
    }

    #[test]
    fn group_norm_objective() {
        // min ||x||_2 s.t. x1 + x2 >= 1 via ln(1 + x1 + x2) >= ln 2.
        let prob = InnerProblem {
            n: 2,
            blocks: vec![0..2],
            linear: vec![0.0, 0.0],
            norms: vec![NormGroup { idx: vec![0, 1], weight: 1.0 }],
            rates: vec![RateRow {
                terms: vec![LogTerm { block: 0, coef: 1.0 / 2f64.ln(), gain: vec![1.0, 1.0] }],
                linear: vec![0.0, 0.0],
                constant: -1.0,
            }],
            budgets: vec![],
        };
        let sol = minimize(&prob, &[2.0, 3.0], Phase::Optimize, &BarrierSettings::default()).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-6 && (sol.x[1] - 0.5).abs() < 1e-6, "{:?}", sol.x);
    }
}
