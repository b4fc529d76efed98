//! Exhaustive grid search for tiny single-carrier instances.
//!
//! On one carrier every rate constraint is a linear inequality in `p`
//! (`SINR >= 2^(demand/weight) - 1`). The links of the BS with the smallest
//! budget are enumerated on a uniform power grid; for each grid point the
//! links of the other BS are placed by a two-variable linear program on
//! every activation subset and rounded to neighbouring grid points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::ProblemInstance;
use crate::scenario::{Band, ScenarioConfig};

const MAX_BLOCK: usize = 2;
const MAX_LEVELS: usize = 50_000_000;

/// One macro cell with one pico and two UEs on a single 20 MHz carrier.
pub fn tiny_scenario() -> ScenarioConfig {
    ScenarioConfig {
        macro_cells: 1,
        picos_per_cell: 1,
        ues_per_cell: 2,
        bands: vec![Band { low_hz: 1900e6, high_hz: 1920e6 }],
        ..Default::default()
    }
}

/// `coef . p >= rhs`.
#[derive(Debug, Clone)]
struct Row {
    coef: Vec<f64>,
    rhs: f64,
}

impl Row {
    fn holds(&self, p: &[f64]) -> bool {
        let mut lhs = 0.0;
        let mut scale = self.rhs.abs();
        for (c, x) in self.coef.iter().zip(p) {
            lhs += c * x;
            scale += (c * x).abs();
        }
        lhs - self.rhs >= -1e-9 * scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    /// Best exact power found.
    pub power_w: f64,
    pub p: Vec<f64>,
    /// Grid points of the enumerated block that were visited.
    pub points: usize,
}

fn constraint_rows(inst: &ProblemInstance) -> Vec<Row> {
    let n = inst.n();
    let positions = inst.coeffs.fc_positions(0);
    let weight = inst.coeffs.weight(0);
    let mut rows = Vec::new();
    for l in inst.constrained_ues() {
        let Some(term) = inst.coeffs.term(l, 0) else { continue };
        let target = (inst.demands[l] / weight).exp2() - 1.0;
        let mut coef = vec![0.0; n];
        for (i, &pos) in positions.iter().enumerate() {
            coef[pos] -= target * term.interference[i];
        }
        for &i in &term.own {
            coef[positions[i]] += term.total[i] - term.interference[i];
        }
        rows.push(Row { coef, rhs: target * inst.coeffs.noise(0) });
    }
    for (k, idx) in inst.bs_positions.iter().enumerate() {
        let mut coef = vec![0.0; n];
        for &i in idx {
            coef[i] = -1.0;
        }
        rows.push(Row { coef, rhs: -inst.budgets[k] });
    }
    rows
}

/// Minimizes `cost . x` over `x >= 0` with `a_j . x >= b_j` for `x` of
/// dimension 0, 1 or 2 by checking every vertex.
fn small_lp(a: &[Vec<f64>], b: &[f64], cost: &[f64]) -> Option<Vec<f64>> {
    let d = cost.len();
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        rows.push((e, 0.0));
    }
    let feasible = |x: &[f64]| {
        rows.iter().all(|(r, rhs)| {
            let lhs: f64 = r.iter().zip(x).map(|(c, v)| c * v).sum();
            let scale = rhs.abs() + r.iter().zip(x).map(|(c, v)| (c * v).abs()).sum::<f64>();
            lhs - rhs >= -1e-12 * scale
        })
    };
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    match d {
        0 => candidates.push(Vec::new()),
        1 => candidates.extend(rows.iter().filter(|(r, _)| r[0] != 0.0).map(|(r, rhs)| vec![rhs / r[0]])),
        _ => {
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    let (r, s) = (&rows[i].0, &rows[j].0);
                    let det = r[0] * s[1] - r[1] * s[0];
                    if det.abs() <= 1e-300 {
                        continue;
                    }
                    let (u, v) = (rows[i].1, rows[j].1);
                    candidates.push(vec![(u * s[1] - v * r[1]) / det, (r[0] * v - s[0] * u) / det]);
                }
            }
        }
    }
    candidates
        .into_iter()
        .filter(|x| x.iter().all(|v| v.is_finite() && *v >= 0.0) && feasible(x))
        .min_by(|x, y| {
            let cx: f64 = x.iter().zip(cost).map(|(a, b)| a * b).sum();
            let cy: f64 = y.iter().zip(cost).map(|(a, b)| a * b).sum();
            cx.total_cmp(&cy)
        })
}

/// Best exact power over all power vectors whose entries are multiples of
/// `step_w`. `incumbent`, when feasible, seeds the search bound; the result
/// is then the better of the incumbent and the grid.
///
/// Supports one carrier and at most two BSs with at most two links each.
/// Returns `None` when no grid point is feasible and there is no incumbent.
pub fn grid_search_optimum(
    inst: &ProblemInstance,
    step_w: f64,
    incumbent: Option<&[f64]>,
) -> Result<Option<GridOptimum>> {
    if !(step_w > 0.0) {
        return Err(Error::Config("grid step must be positive".into()));
    }
    if inst.coeffs.num_fcs() != 1 {
        return Err(Error::TooLarge("grid search needs a single carrier".into()));
    }
    let mut serving: Vec<usize> = (0..inst.num_bs()).filter(|&k| !inst.bs_positions[k].is_empty()).collect();
    if serving.len() > 2 || serving.iter().any(|&k| inst.bs_positions[k].len() > MAX_BLOCK) {
        return Err(Error::TooLarge("grid search supports two BSs with two links each".into()));
    }
    serving.sort_by(|a, b| inst.budgets[*a].total_cmp(&inst.budgets[*b]));
    let n = inst.n();
    let rows = constraint_rows(inst);
    let feasible = |p: &[f64]| rows.iter().all(|r| r.holds(p));
    let grid: Vec<usize> = if serving.len() == 2 { inst.bs_positions[serving[0]].clone() } else { Vec::new() };
    let free: Vec<usize> = serving.last().map(|&k| inst.bs_positions[k].clone()).unwrap_or_default();

    let mut best: Option<(f64, Vec<f64>)> =
        incumbent.filter(|p| p.len() == n && feasible(p)).map(|p| (inst.exact_power(p), p.to_vec()));
    let levels: Vec<usize> = grid
        .iter()
        .map(|_| (inst.budgets[serving[0]] / step_w + 1e-9).floor() as usize)
        .collect();
    if levels.iter().map(|l| l + 1).product::<usize>() > MAX_LEVELS {
        return Err(Error::TooLarge("grid has too many points".into()));
    }
    let free_weight: f64 = inst
        .groups
        .iter()
        .filter(|g| g.positions.iter().any(|i| free.contains(i)))
        .map(|g| g.weight)
        .sum();
    let mut points = 0usize;
    let mut p = vec![0.0; n];

    let consider = |p: &mut Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        let bound = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let fixed = inst.exact_power(p);
        for mask in 0..(1usize << free.len()) {
            let on: Vec<usize> = (0..free.len()).filter(|j| mask >> j & 1 == 1).map(|j| free[j]).collect();
            if !on.is_empty() && fixed + free_weight >= bound {
                continue;
            }
            let a: Vec<Vec<f64>> = rows.iter().map(|r| on.iter().map(|&i| r.coef[i]).collect()).collect();
            let b: Vec<f64> = rows
                .iter()
                .map(|r| r.rhs - grid.iter().map(|&i| r.coef[i] * p[i]).sum::<f64>())
                .collect();
            let cost: Vec<f64> = on.iter().map(|&i| inst.transmit_weights[i]).collect();
            let Some(x) = small_lp(&a, &b, &cost) else { continue };
            let choices: Vec<[f64; 3]> = x
                .iter()
                .map(|v| {
                    let lo = (v / step_w).floor();
                    [lo * step_w, (lo + 1.0) * step_w, (lo + 2.0) * step_w]
                })
                .collect();
            for combo in 0..3usize.pow(on.len() as u32) {
                let mut c = combo;
                for (j, &i) in on.iter().enumerate() {
                    p[i] = choices[j][c % 3];
                    c /= 3;
                }
                if feasible(p) {
                    let e = inst.exact_power(p);
                    if best.as_ref().is_none_or(|b| e < b.0) {
                        *best = Some((e, p.clone()));
                    }
                }
            }
            for &i in &on {
                p[i] = 0.0;
            }
        }
    };

    match grid.len() {
        0 => {
            points += 1;
            consider(&mut p, &mut best);
        }
        1 => {
            for a in 0..=levels[0] {
                p[grid[0]] = a as f64 * step_w;
                if a > 0 && inst.exact_power(&p) >= best.as_ref().map_or(f64::INFINITY, |b| b.0) {
                    break;
                }
                points += 1;
                consider(&mut p, &mut best);
            }
        }
        _ => {
            for a in 0..=levels[0] {
                p[grid[0]] = a as f64 * step_w;
                p[grid[1]] = 0.0;
                if a > 0 && inst.exact_power(&p) >= best.as_ref().map_or(f64::INFINITY, |b| b.0) {
                    break;
                }
                for c in 0..=levels[1] {
                    p[grid[1]] = c as f64 * step_w;
                    if (a as f64 + c as f64) * step_w > inst.budgets[serving[0]] * (1.0 + 1e-12) {
                        break;
                    }
                    if c > 0 && inst.exact_power(&p) >= best.as_ref().map_or(f64::INFINITY, |b| b.0) {
                        break;
                    }
                    points += 1;
                    consider(&mut p, &mut best);
                }
            }
        }
    }
    Ok(best.map(|(power_w, p)| GridOptimum { power_w, p, points }))
}
