//! Exhaustive search over the supports allowed by classical restricted
//! association schemes, for comparison with the flexible solution.

use serde::{Deserialize, Serialize};

use super::{solve, Method, ProblemInstance, SolveStatus, SolverConfig};
use crate::error::{Error, Result};

const MAX_BS: usize = 4;
const MAX_UES: usize = 4;
const MAX_FCS: usize = 2;
const MAX_PATTERNS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    /// At most one UE per (BS, carrier).
    R2,
    /// Exactly one serving BS per UE.
    R3,
    /// One carrier per UE.
    R4,
    /// At most one UE per carrier.
    R5,
}

impl Restriction {
    pub const ALL: [Restriction; 4] = [Restriction::R2, Restriction::R3, Restriction::R4, Restriction::R5];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedOptimum {
    pub restriction: Restriction,
    /// Best exact power over the feasible patterns; `None` if none is feasible.
    pub power_w: Option<f64>,
    pub p: Option<Vec<f64>>,
    pub patterns: usize,
    pub feasible_patterns: usize,
}

/// Cartesian product of choice lists.
fn product(choices: &[Vec<Vec<usize>>]) -> Result<Vec<Vec<usize>>> {
    let count = choices.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len().max(1)));
    if count.is_none_or(|c| c > MAX_PATTERNS) {
        return Err(Error::TooLarge("too many support patterns".into()));
    }
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for options in choices {
        if options.is_empty() {
            continue;
        }
        let mut next = Vec::with_capacity(out.len() * options.len());
        for base in &out {
            for opt in options {
                let mut v = base.clone();
                v.extend_from_slice(opt);
                next.push(v);
            }
        }
        out = next;
    }
    for v in &mut out {
        v.sort_unstable();
        v.dedup();
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn supports(inst: &ProblemInstance, r: Restriction) -> Result<Vec<Vec<usize>>> {
    let ues = inst.constrained_ues();
    let wanted = |i: usize| ues.contains(&inst.links[i].ue);
    let num_fcs = inst.coeffs.num_fcs();
    let positions = |pred: &dyn Fn(usize) -> bool| (0..inst.n()).filter(|&i| wanted(i) && pred(i)).collect::<Vec<_>>();
    let choices: Vec<Vec<Vec<usize>>> = match r {
        Restriction::R2 => inst
            .groups
            .iter()
            .map(|g| {
                let mut opts = vec![Vec::new()];
                opts.extend(g.positions.iter().filter(|&&i| wanted(i)).map(|&i| vec![i]));
                opts
            })
            .collect(),
        Restriction::R3 => ues
            .iter()
            .map(|&l| {
                let mut servers: Vec<usize> = inst.links.iter().filter(|x| x.ue == l).map(|x| x.bs).collect();
                servers.sort_unstable();
                servers.dedup();
                servers.iter().map(|&k| positions(&|i| inst.links[i].ue == l && inst.links[i].bs == k)).collect()
            })
            .collect(),
        Restriction::R4 => ues
            .iter()
            .map(|&l| (0..num_fcs).map(|f| positions(&|i| inst.links[i].ue == l && inst.links[i].fc == f)).collect())
            .collect(),
        Restriction::R5 => (0..num_fcs)
            .map(|f| {
                let mut opts = vec![Vec::new()];
                opts.extend(ues.iter().map(|&l| positions(&|i| inst.links[i].ue == l && inst.links[i].fc == f)));
                opts
            })
            .collect(),
    };
    product(&choices)
}

/// Best exact power over the supports allowed by `restriction`, each solved
/// by SCA on that fixed support.
pub fn enumerate_restricted_optimum(
    inst: &ProblemInstance,
    restriction: Restriction,
    cfg: &SolverConfig,
) -> Result<RestrictedOptimum> {
    if inst.num_bs() > MAX_BS || inst.num_ues() > MAX_UES || inst.coeffs.num_fcs() > MAX_FCS {
        return Err(Error::TooLarge(format!(
            "{} BSs, {} UEs, {} carriers exceeds {MAX_BS}/{MAX_UES}/{MAX_FCS}",
            inst.num_bs(),
            inst.num_ues(),
            inst.coeffs.num_fcs()
        )));
    }
    let ues = inst.constrained_ues();
    let patterns = supports(inst, restriction)?;
    let mut best: Option<(f64, Vec<bool>, Vec<f64>)> = None;
    let mut feasible = 0;
    for keep in &patterns {
        let covered = ues.iter().all(|&l| keep.iter().any(|&i| inst.links[i].ue == l));
        if !covered {
            continue;
        }
        let sub = inst.restricted(keep);
        let rep = solve(&sub, Method::LogSparse, cfg)?;
        if rep.status == SolveStatus::Infeasible {
            continue;
        }
        let p = inst.expand(keep, &rep.p_star);
        if !inst.is_feasible(&p, 1e-6, 1e-9) {
            continue;
        }
        feasible += 1;
        let power = inst.exact_power(&p);
        let groups: Vec<bool> = inst.groups.iter().map(|g| g.positions.iter().any(|&i| p[i] != 0.0)).collect();
        let better = match &best {
            None => true,
            Some((bp, bg, _)) => power < *bp || (power == *bp && groups < *bg),
        };
        if better {
            best = Some((power, groups, p));
        }
    }
    Ok(RestrictedOptimum {
        restriction,
        power_w: best.as_ref().map(|b| b.0),
        p: best.map(|b| b.2),
        patterns: patterns.len(),
        feasible_patterns: feasible,
    })
}
