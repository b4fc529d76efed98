use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::association::{Association, Link};
use crate::channel::{self, RateCoefficients};
use crate::error::{Error, Result};
use crate::power_model::{PowerModel, PowerModelParams};
use crate::scenario::{BsClass, NetworkLayout};

/// A (BS, carrier) activation group with its signal-processing weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub bs: usize,
    pub fc: usize,
    pub positions: Vec<usize>,
    pub weight: f64,
}

/// Which objective the SCA loop minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Log-smoothed group sparsity plus transmit power.
    LogSparse,
    /// Weighted group two-norms plus transmit power.
    L21,
    /// Transmit power only.
    MinTpower,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LogSparse, Method::L21, Method::MinTpower];

    pub fn name(&self) -> &'static str {
        match self {
            Method::LogSparse => "log_sparse",
            Method::L21 => "l21",
            Method::MinTpower => "min_tpower",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The reduced energy-minimization problem on a fixed association.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub coeffs: RateCoefficients,
    /// Rate demand per UE in bits/s.
    pub demands: Vec<f64>,
    /// Transmit budget per BS in Watts.
    pub budgets: Vec<f64>,
    pub bs_positions: Vec<Vec<usize>>,
    pub bs_class: Vec<BsClass>,
    pub groups: Vec<Group>,
    pub transmit_weights: Vec<f64>,
    pub epsilon: f64,
    pub links: Vec<Link>,
    pub sleep_total: f64,
    pub backhaul_w_per_bps: f64,
}

impl ProblemInstance {
    pub fn new(
        layout: &NetworkLayout,
        assoc: &Association,
        coeffs: RateCoefficients,
        params: &PowerModelParams,
    ) -> Result<Self> {
        if coeffs.num_positions() != assoc.len() {
            return Err(Error::Dimension("rate coefficients do not match the association".into()));
        }
        let model = PowerModel::new(layout, assoc, params);
        let groups = model
            .groups
            .iter()
            .map(|g| Group { bs: g.bs, fc: g.fc, positions: g.positions.clone().collect(), weight: g.weight })
            .collect();
        let inst = Self {
            coeffs,
            demands: layout.ues.iter().map(|u| u.rate_demand_bps).collect(),
            budgets: layout.bss.iter().map(|b| b.p_max_w).collect(),
            bs_positions: (0..assoc.num_bs()).map(|k| assoc.bs_positions(k).collect()).collect(),
            bs_class: layout.bss.iter().map(|b| b.class).collect(),
            groups,
            transmit_weights: model.transmit_weights,
            epsilon: params.epsilon,
            links: assoc.links().to_vec(),
            sleep_total: model.sleep_total,
            backhaul_w_per_bps: model.backhaul_w_per_bps,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Runs the default pipeline: LSF map, initial association, orthogonal
    /// pilots, estimation quality and rate coefficients.
    pub fn from_layout(layout: &NetworkLayout, params: &PowerModelParams) -> Result<(Self, Association)> {
        let lsf = crate::scenario::build_lsf_map(layout);
        let assoc = crate::association::initial_association(&lsf, layout);
        let plan = channel::PilotPlan::orthogonal(&assoc, layout);
        let quality = channel::estimation_quality(&lsf, &plan, layout);
        let coeffs = channel::build_rate_coefficients(&lsf, &quality, &assoc, layout);
        let inst = Self::new(layout, &assoc, coeffs, params)?;
        Ok((inst, assoc))
    }

    pub fn validate(&self) -> Result<()> {
        if self.demands.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Config("rate demands must be nonnegative".into()));
        }
        if self.budgets.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if self.groups.iter().any(|g| !(g.weight >= 0.0)) || self.transmit_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("weights must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn num_ues(&self) -> usize {
        self.demands.len()
    }

    pub fn num_bs(&self) -> usize {
        self.budgets.len()
    }

    pub fn with_demands(mut self, rate_bps: f64) -> Self {
        self.demands.iter_mut().for_each(|d| *d = rate_bps);
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }

    /// UEs carrying a rate constraint: served and with positive demand.
    pub fn constrained_ues(&self) -> Vec<usize> {
        (0..self.num_ues()).filter(|&l| self.coeffs.is_active(l) && self.demands[l] > 0.0).collect()
    }

    /// UEs with positive demand but no serving BS.
    pub fn dropped_ues(&self) -> Vec<usize> {
        (0..self.num_ues()).filter(|&l| !self.coeffs.is_active(l)).collect()
    }

    /// Sum of demands of served UEs, the backhaul load used in reports.
    pub fn served_demand(&self) -> f64 {
        (0..self.num_ues()).filter(|&l| self.coeffs.is_active(l)).map(|l| self.demands[l]).sum()
    }

    pub fn rate(&self, p: &[f64], ue: usize) -> f64 {
        channel::ue_rate(p, &self.coeffs, ue)
    }

    pub fn rates(&self, p: &[f64]) -> Vec<f64> {
        (0..self.num_ues()).map(|l| self.rate(p, l)).collect()
    }

    /// Gradient of the model rate of `ue` with respect to `p`, in bits/s per W.
    pub fn rate_gradient(&self, p: &[f64], ue: usize) -> Vec<f64> {
        let mut grad = vec![0.0; self.n()];
        for fc in 0..self.coeffs.num_fcs() {
            let Some(term) = self.coeffs.term(ue, fc) else { continue };
            let positions = self.coeffs.fc_positions(fc);
            let n = self.coeffs.noise(fc);
            let (own, b) = channel::term_dots(p, positions, term);
            let den_a = n + b + own;
            let den_b = n + b;
            let w = self.coeffs.weight(fc) / LN_2;
            for (i, &pos) in positions.iter().enumerate() {
                grad[pos] += w * (term.total[i] / den_a - term.interference[i] / den_b);
            }
        }
        grad
    }

    pub fn budget_usage(&self, p: &[f64], bs: usize) -> f64 {
        self.bs_positions[bs].iter().map(|&i| p[i]).sum()
    }

    pub fn group_sum(&self, p: &[f64], g: usize) -> f64 {
        self.groups[g].positions.iter().map(|&i| p[i]).sum()
    }

    pub fn transmit_term(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.transmit_weights).map(|(x, w)| x * w).sum()
    }

    /// Smooth sparse objective `sum_g w_g ln(1 + s_g/eps) + transmit`.
    ///
    /// Differs from `sum_g w_g ln(eps + s_g) + transmit` by a constant.
    pub fn sparse_objective(&self, p: &[f64]) -> f64 {
        let sparse: f64 = (0..self.groups.len())
            .map(|g| self.groups[g].weight * (self.group_sum(p, g) / self.epsilon).ln_1p())
            .sum();
        sparse + self.transmit_term(p)
    }

    pub fn l21_objective(&self, p: &[f64]) -> f64 {
        let sparse: f64 = self
            .groups
            .iter()
            .map(|g| g.weight * g.positions.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt())
            .sum();
        sparse + self.transmit_term(p)
    }

    /// The smooth objective minimized by `method`.
    pub fn objective(&self, method: Method, p: &[f64]) -> f64 {
        match method {
            Method::LogSparse => self.sparse_objective(p),
            Method::L21 => self.l21_objective(p),
            Method::MinTpower => self.transmit_term(p),
        }
    }

    pub fn objective_gradient(&self, method: Method, p: &[f64]) -> Vec<f64> {
        let mut grad = self.transmit_weights.clone();
        for (g, group) in self.groups.iter().enumerate() {
            match method {
                Method::LogSparse => {
                    let slope = group.weight / (self.epsilon + self.group_sum(p, g));
                    group.positions.iter().for_each(|&i| grad[i] += slope);
                }
                Method::L21 => {
                    let norm = group.positions.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        group.positions.iter().for_each(|&i| grad[i] += group.weight * p[i] / norm);
                    }
                }
                Method::MinTpower => {}
            }
        }
        grad
    }

    /// Linearization of the sparse objective at `q`, evaluated at `p`.
    pub fn surrogate_objective(&self, p: &[f64], q: &[f64]) -> f64 {
        let sparse: f64 = (0..self.groups.len())
            .map(|g| self.groups[g].weight * self.group_sum(p, g) / (self.epsilon + self.group_sum(q, g)))
            .sum();
        sparse + self.transmit_term(p)
    }

    /// Constant that makes `surrogate_objective(., q) + constant` tangent to
    /// `sparse_objective` at `q`.
    pub fn surrogate_constant(&self, q: &[f64]) -> f64 {
        (0..self.groups.len())
            .map(|g| {
                let s = self.group_sum(q, g);
                self.groups[g].weight * ((s / self.epsilon).ln_1p() - s / (self.epsilon + s))
            })
            .sum()
    }

    /// Concave minorant of the UE rate obtained by linearizing the
    /// interference log at `q`.
    pub fn surrogate_rate(&self, p: &[f64], q: &[f64], ue: usize) -> f64 {
        let mut total = 0.0;
        for fc in 0..self.coeffs.num_fcs() {
            let Some(term) = self.coeffs.term(ue, fc) else { continue };
            let positions = self.coeffs.fc_positions(fc);
            let n = self.coeffs.noise(fc);
            let (own_p, b_p) = channel::term_dots(p, positions, term);
            let (_, b_q) = channel::term_dots(q, positions, term);
            let log_part = ((own_p + b_p - b_q) / (n + b_q)).ln_1p();
            let lin = (b_p - b_q) / (n + b_q);
            total += self.coeffs.weight(fc) * (log_part - lin) / LN_2;
        }
        total
    }

    /// Exact model power with the backhaul evaluated at the served demand.
    pub fn exact_power(&self, p: &[f64]) -> f64 {
        let sparse: f64 = self
            .groups
            .iter()
            .filter(|g| g.positions.iter().any(|&i| p[i] != 0.0))
            .map(|g| g.weight)
            .sum();
        self.sleep_total + sparse + self.transmit_term(p) + self.backhaul_w_per_bps * self.served_demand()
    }

    /// Same problem restricted to the listed positions.
    pub fn restricted(&self, keep: &[usize]) -> Self {
        let mut new_index = vec![usize::MAX; self.n()];
        for (i, &p) in keep.iter().enumerate() {
            new_index[p] = i;
        }
        let remap = |v: &[usize]| v.iter().filter(|&&i| new_index[i] != usize::MAX).map(|&i| new_index[i]).collect();
        Self {
            coeffs: self.coeffs.restrict(keep),
            demands: self.demands.clone(),
            budgets: self.budgets.clone(),
            bs_positions: self.bs_positions.iter().map(|v| remap(v)).collect(),
            bs_class: self.bs_class.clone(),
            groups: self
                .groups
                .iter()
                .map(|g| Group { bs: g.bs, fc: g.fc, positions: remap(&g.positions), weight: g.weight })
                .collect(),
            transmit_weights: keep.iter().map(|&i| self.transmit_weights[i]).collect(),
            epsilon: self.epsilon,
            links: keep.iter().map(|&i| self.links[i]).collect(),
            sleep_total: self.sleep_total,
            backhaul_w_per_bps: self.backhaul_w_per_bps,
        }
    }

    /// Scatters a restricted vector back to full length.
    pub fn expand(&self, keep: &[usize], p_restricted: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n()];
        for (i, &pos) in keep.iter().enumerate() {
            p[pos] = p_restricted[i];
        }
        p
    }

    /// Largest relative rate shortfall over constrained UEs (0 when feasible).
    pub fn max_rate_violation(&self, p: &[f64]) -> f64 {
        self.constrained_ues()
            .into_iter()
            .map(|l| ((self.demands[l] - self.rate(p, l)) / self.demands[l]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, p: &[f64], rate_tol: f64, budget_tol: f64) -> bool {
        p.iter().all(|&x| x >= 0.0)
            && self.max_rate_violation(p) <= rate_tol
            && (0..self.num_bs()).all(|k| self.budget_usage(p, k) <= self.budgets[k] * (1.0 + budget_tol))
    }
}
