use std::f64::consts::LN_2;

use super::barrier::{self, InnerProblem, InnerSolution, LogTerm, NormGroup, Phase, RateRow, BudgetRow};
use super::{kkt_residual, refine_rate_multipliers, ActiveGroups, DualVariables, Method, ProblemInstance, SolveStatus, SolverConfig, SolverReport};
use crate::channel::term_dots;
use crate::error::{Error, Result};

/// Internal power unit: milliwatts per Watt.
const MW: f64 = 1e3;
/// Smallest entry of a barrier start point, in milliwatts.
/// Rate rows are normalized by the demand; the barrier starts at least this
/// far inside each of them.
const ROW_MARGIN: f64 = 1e-6;
const MIN_START_MW: f64 = 1e-12;

/// Carrier-major ordering of the power-vector positions.
struct Ordering {
    /// Solver index to instance position.
    order: Vec<usize>,
    /// Instance position to solver index.
    inv: Vec<usize>,
    blocks: Vec<std::ops::Range<usize>>,
    /// Carrier to block index, `None` for carriers without positions.
    fc_block: Vec<Option<usize>>,
}

impl Ordering {
    fn new(inst: &ProblemInstance) -> Self {
        let mut order = Vec::with_capacity(inst.n());
        let mut blocks = Vec::new();
        let mut fc_block = Vec::new();
        for fc in 0..inst.coeffs.num_fcs() {
            let pos = inst.coeffs.fc_positions(fc);
            if pos.is_empty() {
                fc_block.push(None);
                continue;
            }
            fc_block.push(Some(blocks.len()));
            blocks.push(order.len()..order.len() + pos.len());
            order.extend_from_slice(pos);
        }
        let mut inv = vec![0; inst.n()];
        for (i, &p) in order.iter().enumerate() {
            inv[p] = i;
        }
        Self { order, inv, blocks, fc_block }
    }

    fn to_solver(&self, p: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| p[i] * MW).collect()
    }

    fn to_instance(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; x.len()];
        for (i, &pos) in self.order.iter().enumerate() {
            p[pos] = x[i] / MW;
        }
        p
    }
}

/// Builds the convex subproblem around the expansion point `q` (Watts).
fn build_inner(inst: &ProblemInstance, method: Method, q: &[f64], ord: &Ordering) -> (InnerProblem, Vec<usize>) {
    let n = inst.n();
    let mut linear = vec![0.0; n];
    for pos in 0..n {
        linear[ord.inv[pos]] = inst.transmit_weights[pos] / MW;
    }
    let mut norms = Vec::new();
    for (g, group) in inst.groups.iter().enumerate() {
        if group.positions.is_empty() {
            continue;
        }
        match method {
            Method::LogSparse => {
                let slope = group.weight / (inst.epsilon + inst.group_sum(q, g)) / MW;
                for &pos in &group.positions {
                    linear[ord.inv[pos]] += slope;
                }
            }
            Method::L21 => norms.push(NormGroup {
                idx: group.positions.iter().map(|&p| ord.inv[p]).collect(),
                weight: group.weight / MW,
            }),
            Method::MinTpower => {}
        }
    }

    let ues = inst.constrained_ues();
    let mut rates = Vec::with_capacity(ues.len());
    for &ue in &ues {
        let mut terms = Vec::new();
        let mut row_linear = vec![0.0; n];
        let mut constant = -1.0;
        for fc in 0..inst.coeffs.num_fcs() {
            let (Some(block), Some(term)) = (ord.fc_block[fc], inst.coeffs.term(ue, fc)) else { continue };
            let positions = inst.coeffs.fc_positions(fc);
            let scale = 1.0 / (MW * inst.coeffs.noise(fc));
            let coef = inst.coeffs.weight(fc) / (inst.demands[ue] * LN_2);
            let (_, bq) = term_dots(q, positions, term);
            let bq = bq / inst.coeffs.noise(fc);
            let range = ord.blocks[block].clone();
            for (j, i) in range.enumerate() {
                row_linear[i] -= coef * term.interference[j] * scale / (1.0 + bq);
            }
            constant -= coef * (bq.ln_1p() - bq / (1.0 + bq));
            terms.push(LogTerm { block, coef, gain: term.total.iter().map(|a| a * scale).collect() });
        }
        rates.push(RateRow { terms, linear: row_linear, constant });
    }

    let budgets = inst
        .bs_positions
        .iter()
        .zip(&inst.budgets)
        .filter(|(idx, _)| !idx.is_empty())
        .map(|(idx, cap)| BudgetRow { idx: idx.iter().map(|&p| ord.inv[p]).collect(), cap: cap * MW })
        .collect();

    (InnerProblem { n, blocks: ord.blocks.clone(), linear, norms, rates, budgets }, ues)
}

/// Pushes a start point strictly inside the nonnegativity and budget constraints.
fn interior_start(prob: &InnerProblem, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.max(MIN_START_MW);
    }
    for b in &prob.budgets {
        let used: f64 = b.idx.iter().map(|&i| x[i]).sum();
        if used >= b.cap * (1.0 - 1e-9) {
            let f = b.cap * (1.0 - 1e-6) / used;
            b.idx.iter().for_each(|&i| x[i] *= f);
        }
    }
}

fn convert_duals(inst: &ProblemInstance, ues: &[usize], sol: &InnerSolution, ord: &Ordering) -> DualVariables {
    let mut d = DualVariables::zeros(inst);
    for (r, &ue) in ues.iter().enumerate() {
        d.rate[ue] = sol.rate_duals[r] / inst.demands[ue];
    }
    let mut b = 0;
    for k in 0..inst.num_bs() {
        if !inst.bs_positions[k].is_empty() {
            d.budget[k] = sol.budget_duals[b] * MW;
            b += 1;
        }
    }
    for pos in 0..inst.n() {
        d.nonneg[pos] = sol.nonneg_duals[ord.inv[pos]] * MW;
    }
    d
}

/// One convex subproblem solve around `q`. `Ok(None)` means the surrogate
/// constraints admit no strictly feasible point.
fn inner_step(
    inst: &ProblemInstance,
    method: Method,
    q: &[f64],
    cfg: &SolverConfig,
) -> Result<Option<(Vec<f64>, DualVariables, usize)>> {
    let ord = Ordering::new(inst);
    let (prob, ues) = build_inner(inst, method, q, &ord);
    let mut x0 = ord.to_solver(q);
    interior_start(&prob, &mut x0);
    let mut steps = 0;
    let interior = prob.rates.iter().all(|r| prob.row_value(r, &x0) > ROW_MARGIN);
    if !interior {
        let p1 = barrier::minimize(&prob, &x0, Phase::Feasibility { stop_below: Some(ROW_MARGIN) }, &cfg.barrier)?;
        steps += p1.newton_steps;
        if p1.slack.unwrap_or(0.0) >= 0.0 {
            return Ok(None);
        }
        x0 = p1.x;
    }
    let sol = barrier::minimize(&prob, &x0, Phase::Optimize, &cfg.barrier)?;
    steps += sol.newton_steps;
    let duals = convert_duals(inst, &ues, &sol, &ord);
    Ok(Some((ord.to_instance(&sol.x), duals, steps)))
}

/// Minimizes the log-sparse surrogate around `q` under the rate surrogates.
pub fn solve_inner(inst: &ProblemInstance, q: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, DualVariables)> {
    if inst.constrained_ues().is_empty() {
        return Ok((vec![0.0; inst.n()], DualVariables::zeros(inst)));
    }
    match inner_step(inst, Method::LogSparse, q, cfg)? {
        Some((p, d, _)) => Ok((p, d)),
        None => Err(Error::Numerical("surrogate constraints are infeasible at the expansion point".into())),
    }
}

struct ScaRun {
    p: Vec<f64>,
    duals: DualVariables,
    trajectory: Vec<f64>,
    iterations: usize,
    newton_steps: usize,
    status: SolveStatus,
}

fn run_sca(inst: &ProblemInstance, method: Method, p0: &[f64], cfg: &SolverConfig) -> Result<ScaRun> {
    if inst.constrained_ues().is_empty() {
        let p = vec![0.0; inst.n()];
        return Ok(ScaRun {
            trajectory: vec![inst.objective(method, &p)],
            p,
            duals: DualVariables::zeros(inst),
            iterations: 1,
            newton_steps: 0,
            status: SolveStatus::Converged,
        });
    }
    let mut q = p0.to_vec();
    let mut trajectory = vec![inst.objective(method, &q)];
    let mut duals = DualVariables::zeros(inst);
    let mut newton_steps = 0;
    for it in 1..=cfg.max_outer {
        let step = match inner_step(inst, method, &q, cfg) {
            Ok(step) => step,
            // A breakdown after the first iteration keeps the last feasible iterate.
            Err(Error::Numerical(_)) if it > 1 => {
                return Ok(ScaRun { p: q, duals, trajectory, iterations: it - 1, newton_steps, status: SolveStatus::MaxIter });
            }
            Err(e) => return Err(e),
        };
        let Some((p, d, steps)) = step else {
            return Ok(ScaRun { p: q, duals, trajectory, iterations: it, newton_steps, status: SolveStatus::Infeasible });
        };
        newton_steps += steps;
        let diff = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        trajectory.push(inst.objective(method, &p));
        q = p;
        duals = d;
        if diff <= cfg.eps_th_w {
            return Ok(ScaRun { p: q, duals, trajectory, iterations: it, newton_steps, status: SolveStatus::Converged });
        }
    }
    Ok(ScaRun { p: q, duals, trajectory, iterations: cfg.max_outer, newton_steps, status: SolveStatus::MaxIter })
}

/// Support of the groups whose power exceeds `threshold`.
fn active_support(inst: &ProblemInstance, p: &[f64], threshold: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for (g, group) in inst.groups.iter().enumerate() {
        if inst.group_sum(p, g) > threshold {
            keep.extend(&group.positions);
        }
    }
    keep.sort_unstable();
    keep
}

/// Switches off residual groups and re-solves for minimum transmit power on
/// the surviving support. Returns `None` when that fails to stay feasible.
fn polish(
    inst: &ProblemInstance,
    p: &[f64],
    cfg: &SolverConfig,
) -> Result<Option<(Vec<f64>, DualVariables, usize)>> {
    let threshold = cfg.group_off_threshold(inst);
    let mut current = p.to_vec();
    let mut keep = active_support(inst, &current, threshold);
    let mut steps = 0;
    for _ in 0..3 {
        let sub = inst.restricted(&keep);
        let start: Vec<f64> = keep.iter().map(|&i| current[i]).collect();
        let sub_cfg = SolverConfig { polish: false, ..cfg.clone() };
        let run = match run_sca(&sub, Method::MinTpower, &start, &sub_cfg) {
            Ok(r) => r,
            Err(_) => return Ok(None),
        };
        steps += run.newton_steps;
        if run.status == SolveStatus::Infeasible {
            return Ok(None);
        }
        let full = inst.expand(&keep, &run.p);
        let next = active_support(inst, &full, threshold);
        let mut duals = DualVariables::zeros(inst);
        duals.rate.clone_from(&run.duals.rate);
        duals.budget.clone_from(&run.duals.budget);
        for (i, &pos) in keep.iter().enumerate() {
            duals.nonneg[pos] = run.duals.nonneg[i];
        }
        if next == keep {
            return Ok(Some((full, duals, steps)));
        }
        current = full;
        keep = next;
    }
    Ok(None)
}

fn report(inst: &ProblemInstance, method: Method, run: ScaRun, cfg: &SolverConfig) -> Result<SolverReport> {
    let ScaRun { p, mut duals, trajectory, iterations, mut newton_steps, status } = run;
    if status == SolveStatus::Infeasible {
        return Ok(SolverReport {
            objective_trajectory: trajectory,
            iterations,
            newton_steps,
            ..infeasible_report(inst, method)
        });
    }
    let constrained = !inst.constrained_ues().is_empty();
    if constrained {
        duals = refine_rate_multipliers(&p, &duals, inst, method);
    }
    let kkt = constrained.then(|| kkt_residual(&p, &duals, inst, method));
    let mut p_star = p.clone();
    let mut polish_duals = None;
    if constrained && cfg.polish {
        if let Some((q, d, steps)) = polish(inst, &p, cfg)? {
            newton_steps += steps;
            if inst.is_feasible(&q, 1e-9, 1e-9) {
                p_star = q;
                polish_duals = Some(d);
            }
        }
    }
    Ok(SolverReport {
        method,
        status,
        achieved_rates: inst.rates(&p_star),
        active_groups: ActiveGroups::of(inst, &p_star),
        total_power_exact: inst.exact_power(&p_star),
        transmit_power_w: p_star.iter().sum(),
        max_rate_violation_rel: inst.max_rate_violation(&p_star),
        p_star,
        stationary_point: p,
        objective_trajectory: trajectory,
        duals,
        kkt,
        polish_duals,
        iterations,
        newton_steps,
        dropped_ues: inst.dropped_ues(),
    })
}

/// SCA for any of the three objectives from a feasible start `p0`.
pub fn sca_solve_with(inst: &ProblemInstance, method: Method, p0: &[f64], cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    inst.validate()?;
    if p0.len() != inst.n() {
        return Err(Error::Dimension(format!("start point has {} entries, expected {}", p0.len(), inst.n())));
    }
    let run = run_sca(inst, method, p0, cfg)?;
    report(inst, method, run, cfg)
}

/// SCA on the log-smoothed group-sparse objective from a feasible start.
pub fn sca_solve(inst: &ProblemInstance, p0: &[f64], cfg: &SolverConfig) -> Result<SolverReport> {
    sca_solve_with(inst, Method::LogSparse, p0, cfg)
}

fn infeasible_report(inst: &ProblemInstance, method: Method) -> SolverReport {
    let zeros = vec![0.0; inst.n()];
    SolverReport {
        method,
        status: SolveStatus::Infeasible,
        achieved_rates: inst.rates(&zeros),
        active_groups: ActiveGroups::of(inst, &zeros),
        total_power_exact: f64::NAN,
        transmit_power_w: 0.0,
        max_rate_violation_rel: inst.max_rate_violation(&zeros),
        p_star: zeros.clone(),
        stationary_point: zeros,
        objective_trajectory: Vec::new(),
        duals: DualVariables::zeros(inst),
        kkt: None,
        polish_duals: None,
        iterations: 0,
        newton_steps: 0,
        dropped_ues: inst.dropped_ues(),
    }
}

/// Finds a feasible start and runs SCA for `method`.
pub fn solve(inst: &ProblemInstance, method: Method, cfg: &SolverConfig) -> Result<SolverReport> {
    match find_feasible_start(inst, cfg)? {
        Some(p0) => sca_solve_with(inst, method, &p0, cfg),
        None => Ok(infeasible_report(inst, method)),
    }
}

pub fn solve_min_transmit_power(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolverReport> {
    solve(inst, Method::MinTpower, cfg)
}

pub fn solve_l21(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolverReport> {
    solve(inst, Method::L21, cfg)
}

/// A feasible power vector, or `None` when the demands cannot be met.
///
/// Scales an equal split of every budget over its BS's links by a common
/// factor found by bisection; if even the near-full split fails, runs an SCA
/// pass on the max-min slack problem.
pub fn find_feasible_start(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Option<Vec<f64>>> {
    let ues = inst.constrained_ues();
    if ues.is_empty() {
        return Ok(Some(vec![0.0; inst.n()]));
    }
    let per_link = inst
        .bs_positions
        .iter()
        .zip(&inst.budgets)
        .filter(|(idx, _)| !idx.is_empty())
        .map(|(idx, cap)| cap / idx.len() as f64)
        .fold(f64::INFINITY, f64::min);
    let base = vec![per_link; inst.n()];
    let scaled = |s: f64| base.iter().map(|b| b * s).collect::<Vec<_>>();
    let meets = |p: &[f64]| ues.iter().all(|&l| inst.rate(p, l) >= inst.demands[l]);
    let s_max = 1.0 - 1e-6;
    if meets(&scaled(s_max)) {
        let (mut lo, mut hi) = (0.0, s_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if meets(&scaled(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Ok(Some(scaled(hi)));
    }

    let mut q = scaled(s_max);
    let mut best = f64::INFINITY;
    for _ in 0..cfg.max_outer {
        let ord = Ordering::new(inst);
        let (prob, _) = build_inner(inst, Method::MinTpower, &q, &ord);
        let mut x0 = ord.to_solver(&q);
        interior_start(&prob, &mut x0);
        let sol = barrier::minimize(&prob, &x0, Phase::Feasibility { stop_below: Some(1e-6) }, &cfg.barrier)?;
        let slack = sol.slack.unwrap_or(f64::INFINITY);
        let p = ord.to_instance(&sol.x);
        if slack < 0.0 && meets(&p) {
            return Ok(Some(p));
        }
        if best - slack <= 1e-9 * best.abs().max(1.0) {
            return Ok(None);
        }
        best = slack;
        q = p;
    }
    Ok(None)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::channel::{RateCoefficients, RateTerm};
    use crate::optimizer::Group;
    use crate::scenario::BsClass;

    pub(crate) fn single_link(gain: f64, demand: f64, budget: f64) -> ProblemInstance {
        let noise = 20e6 * crate::dbm_per_hz_to_w(-174.0);
        let term = RateTerm { total: vec![gain], interference: vec![0.0], own: vec![0] };
        let coeffs =
            RateCoefficients::from_parts(1, vec![vec![0]], vec![noise], vec![0.96 * 20e6], vec![Some(vec![term])]).unwrap();
        ProblemInstance {
            coeffs,
            demands: vec![demand],
            budgets: vec![budget],
            bs_positions: vec![vec![0]],
            bs_class: vec![BsClass::Pico],
            groups: vec![Group { bs: 0, fc: 0, positions: vec![0], weight: 4.8 }],
            transmit_weights: vec![0.96 / 0.25],
            epsilon: 1e-5,
            links: vec![crate::association::Link { bs: 0, ue: 0, fc: 0 }],
            sleep_total: 4.3,
            backhaul_w_per_bps: 5e-7,
        }
    }

    fn closed_form(gain: f64, demand: f64) -> f64 {
        let noise = 20e6 * crate::dbm_per_hz_to_w(-174.0);
        (2f64.powf(demand / (0.96 * 20e6)) - 1.0) * noise / gain
    }

    #[test]
    fn zero_demand_returns_zero() {
        let inst = single_link(1e-9, 0.0, 1.0);
        let cfg = SolverConfig::default();
        assert_eq!(find_feasible_start(&inst, &cfg).unwrap(), Some(vec![0.0]));
        let (p, d) = solve_inner(&inst, &[0.0], &cfg).unwrap();
        assert_eq!(p, vec![0.0]);
        assert_eq!(d.rate, vec![0.0]);
        for method in Method::ALL {
            let r = solve(&inst, method, &cfg).unwrap();
            assert_eq!(r.p_star, vec![0.0]);
            assert_eq!(r.iterations, 1);
            assert_eq!(r.total_power_exact, 4.3);
        }
    }

    #[test]
    fn single_link_start_is_closed_form() {
        let inst = single_link(1e-9, 5e6, 1.0);
        let p0 = find_feasible_start(&inst, &SolverConfig::default()).unwrap().unwrap();
        let exact = closed_form(1e-9, 5e6);
        assert!((p0[0] / exact - 1.0).abs() < 1e-9, "{} vs {exact}", p0[0]);
    }

    #[test]
    fn single_link_beyond_budget_is_infeasible() {
        let gain = 1e-13;
        let cap = 0.5;
        // Demand needing twice the budget.
        let noise = 20e6 * crate::dbm_per_hz_to_w(-174.0);
        let demand = 0.96 * 20e6 * (1.0 + 2.0 * cap * gain / noise).log2();
        let inst = single_link(gain, demand, cap);
        assert_eq!(find_feasible_start(&inst, &SolverConfig::default()).unwrap(), None);
        let r = sca_solve_with(&inst, Method::LogSparse, &[0.25], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert_eq!(solve(&inst, Method::L21, &SolverConfig::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn single_link_inner_solution_and_dual() {
        let gain = 1e-9;
        let demand = 5e6;
        let inst = single_link(gain, demand, 1.0);
        let cfg = SolverConfig::default();
        let p0 = find_feasible_start(&inst, &cfg).unwrap().unwrap();
        let q = vec![p0[0] * 3.0];
        let (p, d) = solve_inner(&inst, &q, &cfg).unwrap();
        let exact = closed_form(gain, demand);
        assert!((p[0] / exact - 1.0).abs() < 1e-7, "{} vs {exact}", p[0]);
        // Stationarity: objective slope = zeta * dR/dp.
        let slope = inst.objective_gradient(Method::MinTpower, &p)[0] + 4.8 / (1e-5 + q[0]);
        let dr = inst.rate_gradient(&p, 0)[0];
        assert!((d.rate[0] * dr / slope - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_link_methods_agree() {
        let inst = single_link(1e-9, 5e6, 1.0);
        let cfg = SolverConfig::default();
        let exact = closed_form(1e-9, 5e6);
        for method in Method::ALL {
            let r = solve(&inst, method, &cfg).unwrap();
            assert_eq!(r.status, SolveStatus::Converged);
            assert!((r.p_star[0] / exact - 1.0).abs() < 1e-7, "{method}: {} vs {exact}", r.p_star[0]);
        }
    }
}
