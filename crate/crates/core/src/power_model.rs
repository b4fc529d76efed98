//! Flexible BS power consumption model.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::association::Association;
use crate::error::{Error, Result};
use crate::scenario::{BaseStation, BsClass, FrequencyCarrier, NetworkLayout};

/// Baseband and RF reference powers, per antenna per 10 MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReference {
    pub baseband_w: f64,
    pub rf_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerModelParams {
    #[serde(rename = "macro")]
    pub macro_ref: ClassReference,
    pub pico: ClassReference,
    /// Backhaul power per 100 Mbit/s of carried traffic.
    pub backhaul_w_per_100mbps: f64,
    pub epsilon: f64,
}

impl Default for PowerModelParams {
    fn default() -> Self {
        Self {
            macro_ref: ClassReference { baseband_w: 3.4, rf_w: 3.4 },
            pico: ClassReference { baseband_w: 0.3, rf_w: 0.3 },
            backhaul_w_per_100mbps: 50.0,
            epsilon: 1e-5,
        }
    }
}

impl PowerModelParams {
    pub fn validate(&self) -> Result<()> {
        let refs = [&self.macro_ref, &self.pico];
        if refs.iter().any(|r| !(r.baseband_w >= 0.0 && r.rf_w >= 0.0)) {
            return Err(Error::Config("reference powers must be nonnegative".into()));
        }
        if !(self.backhaul_w_per_100mbps >= 0.0) {
            return Err(Error::Config("backhaul power must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn reference(&self, class: BsClass) -> &ClassReference {
        match class {
            BsClass::Macro => &self.macro_ref,
            BsClass::Pico => &self.pico,
        }
    }
}

/// Signal-processing power of one active (BS, carrier) group.
pub fn sp_weight(bs: &BaseStation, fc: &FrequencyCarrier, params: &PowerModelParams) -> f64 {
    let r = params.reference(bs.class);
    bs.antennas as f64 * (fc.bandwidth_hz / 10e6) * (r.baseband_w + r.rf_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    PerBs,
    PerBsPerFc,
    PerUe,
    PerUePerFc,
    PerFc,
}

impl Grouping {
    /// Position lists of each group.
    pub fn groups(&self, assoc: &Association) -> Vec<Vec<usize>> {
        let links = assoc.links();
        let select = |pred: &dyn Fn(usize) -> bool| (0..links.len()).filter(|&i| pred(i)).collect::<Vec<_>>();
        match self {
            Grouping::PerBs => (0..assoc.num_bs()).map(|k| assoc.bs_positions(k).collect()).collect(),
            Grouping::PerBsPerFc => (0..assoc.num_bs())
                .flat_map(|k| (0..assoc.num_fcs()).map(move |f| (k, f)))
                .map(|(k, f)| assoc.bs_fc_positions(k, f).collect())
                .collect(),
            Grouping::PerUe => (0..assoc.num_ues()).map(|l| select(&|i| links[i].ue == l)).collect(),
            Grouping::PerUePerFc => (0..assoc.num_ues())
                .flat_map(|l| (0..assoc.num_fcs()).map(move |f| (l, f)))
                .map(|(l, f)| select(&|i| links[i].ue == l && links[i].fc == f))
                .collect(),
            Grouping::PerFc => (0..assoc.num_fcs()).map(|f| select(&|i| links[i].fc == f)).collect(),
        }
    }
}

/// Weighted count of groups with at least one nonzero entry.
pub fn group_sparsity(x: &[f64], groups: &[Vec<usize>], weights: Option<&[f64]>) -> Result<f64> {
    if let Some(w) = weights {
        if w.len() != groups.len() {
            return Err(Error::Dimension(format!("{} weights for {} groups", w.len(), groups.len())));
        }
    }
    let mut total = 0.0;
    for (g, members) in groups.iter().enumerate() {
        if members.iter().any(|&i| x[i] != 0.0) {
            total += weights.map_or(1.0, |w| w[g]);
        }
    }
    Ok(total)
}

/// One (BS, carrier) activation group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportGroup {
    pub bs: usize,
    pub fc: usize,
    pub positions: Range<usize>,
    pub weight: f64,
}

/// Precomputed power model for one layout and association.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub groups: Vec<SupportGroup>,
    /// Transmit-term weight `(1 - tau/beta) / eta` of each power-vector entry.
    pub transmit_weights: Vec<f64>,
    pub sleep_total: f64,
    pub backhaul_w_per_bps: f64,
    pub epsilon: f64,
}

impl PowerModel {
    pub fn new(layout: &NetworkLayout, assoc: &Association, params: &PowerModelParams) -> Self {
        let mut groups = Vec::new();
        for k in 0..assoc.num_bs() {
            for f in 0..assoc.num_fcs() {
                groups.push(SupportGroup {
                    bs: k,
                    fc: f,
                    positions: assoc.bs_fc_positions(k, f),
                    weight: sp_weight(&layout.bss[k], &layout.fcs[f], params),
                });
            }
        }
        let transmit_weights = assoc
            .links()
            .iter()
            .map(|l| layout.fcs[l.fc].downlink_fraction() / layout.bss[l.bs].pa_efficiency)
            .collect();
        Self {
            groups,
            transmit_weights,
            sleep_total: layout.sleep_power_total(),
            backhaul_w_per_bps: params.backhaul_w_per_100mbps / 1e8,
            epsilon: params.epsilon,
        }
    }

    pub fn group_sum(&self, p: &[f64], g: usize) -> f64 {
        p[self.groups[g].positions.clone()].iter().sum()
    }

    pub fn transmit_term(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.transmit_weights).map(|(x, w)| x * w).sum()
    }

    pub fn backhaul_power(&self, rate_bps: f64) -> f64 {
        self.backhaul_w_per_bps * rate_bps
    }

    pub fn active_groups(&self, p: &[f64]) -> Vec<bool> {
        (0..self.groups.len()).map(|g| p[self.groups[g].positions.clone()].iter().any(|&x| x != 0.0)).collect()
    }

    /// Exact model value with true group sparsity.
    pub fn total_power_exact(&self, p: &[f64], rate_bps: f64) -> f64 {
        let sparse: f64 = self
            .active_groups(p)
            .iter()
            .zip(&self.groups)
            .filter(|(on, _)| **on)
            .map(|(_, g)| g.weight)
            .sum();
        self.sleep_total + sparse + self.transmit_term(p) + self.backhaul_power(rate_bps)
    }

    /// Log-smoothed model value with smoothing constant `eps`.
    pub fn total_power_smooth(&self, p: &[f64], rate_bps: f64, eps: f64) -> f64 {
        let norm = (1.0 / eps).ln_1p();
        let sparse: f64 = (0..self.groups.len())
            .map(|g| self.groups[g].weight * (self.group_sum(p, g) / eps).ln_1p() / norm)
            .sum();
        self.sleep_total + sparse + self.transmit_term(p) + self.backhaul_power(rate_bps)
    }

    /// Mixed-norm relaxation of the model.
    pub fn total_power_l21(&self, p: &[f64], rate_bps: f64) -> f64 {
        let sparse: f64 = self
            .groups
            .iter()
            .map(|g| g.weight * p[g.positions.clone()].iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum();
        self.sleep_total + sparse + self.transmit_term(p) + self.backhaul_power(rate_bps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::initial_association;
    use crate::scenario::{build_lsf_map, generate_scenario, ScenarioConfig};
    use proptest::prelude::*;

    fn fixture() -> (NetworkLayout, Association, PowerModel) {
        let lay = generate_scenario(&ScenarioConfig::default(), 2).unwrap();
        let map = build_lsf_map(&lay);
        let assoc = initial_association(&map, &lay);
        let model = PowerModel::new(&lay, &assoc, &PowerModelParams::default());
        (lay, assoc, model)
    }

    fn pico(antennas: usize) -> BaseStation {
        BaseStation {
            id: 0,
            class: BsClass::Pico,
            position: crate::scenario::Point::new(0.0, 0.0),
            antennas,
            p_max_w: 1.0,
            p_sleep_w: 4.3,
            pa_efficiency: 0.25,
            cell: 0,
        }
    }

    fn carrier(bw: f64) -> FrequencyCarrier {
        FrequencyCarrier { id: 0, center_hz: 2e9, bandwidth_hz: bw, pilot_length: 0, coherence_symbols: 200, lsf_symbols: 4000 }
    }

    #[test]
    fn sp_weight_examples() {
        let params = PowerModelParams {
            pico: ClassReference { baseband_w: 4.0, rf_w: 6.0 },
            ..Default::default()
        };
        assert_eq!(sp_weight(&pico(4), &carrier(20e6), &params), 80.0);
        assert_eq!(sp_weight(&pico(1), &carrier(10e6), &params), 10.0);
        assert_eq!(sp_weight(&pico(3), &carrier(40e6), &params), 2.0 * sp_weight(&pico(3), &carrier(20e6), &params));
        assert!((sp_weight(&pico(4), &carrier(20e6), &PowerModelParams::default()) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn group_sparsity_examples() {
        let groups = vec![vec![0, 1], vec![2, 3]];
        assert_eq!(group_sparsity(&[0.0; 4], &groups, Some(&[3.0, 5.0])).unwrap(), 0.0);
        assert_eq!(group_sparsity(&[0.0, 0.0, 1.0, 2.0], &groups, Some(&[3.0, 5.0])).unwrap(), 5.0);
        assert_eq!(group_sparsity(&[1.0, 0.0, 1.0, 2.0], &groups, Some(&[3.0, 5.0])).unwrap(), 8.0);
        assert_eq!(group_sparsity(&[1.0, 0.0, 1.0, 2.0], &groups, None).unwrap(), 2.0);
        assert!(matches!(group_sparsity(&[0.0; 4], &groups, Some(&[1.0])), Err(Error::Dimension(_))));
    }

    #[test]
    fn groupings_partition_the_vector() {
        let (_, assoc, _) = fixture();
        for g in [Grouping::PerBs, Grouping::PerBsPerFc, Grouping::PerUe, Grouping::PerUePerFc, Grouping::PerFc] {
            let mut all: Vec<usize> = g.groups(&assoc).into_iter().flatten().collect();
            all.sort_unstable();
            assert_eq!(all, (0..assoc.len()).collect::<Vec<_>>(), "{g:?}");
        }
    }

    #[test]
    fn zero_power_is_sleep_sum() {
        let (_, assoc, model) = fixture();
        let p = vec![0.0; assoc.len()];
        assert_eq!(model.total_power_exact(&p, 0.0), 289.5);
        assert_eq!(model.total_power_smooth(&p, 0.0, 1e-5), 289.5);
        assert_eq!(model.total_power_l21(&p, 0.0), 289.5);
    }

    #[test]
    fn single_pico_hand_evaluation() {
        let model = PowerModel {
            groups: vec![SupportGroup { bs: 0, fc: 0, positions: 0..1, weight: 4.8 }],
            transmit_weights: vec![1.0 / 0.25],
            sleep_total: 4.3,
            backhaul_w_per_bps: 50.0 / 1e8,
            epsilon: 1e-5,
        };
        assert!((model.total_power_exact(&[0.5], 2e6) - 12.1).abs() < 1e-12);
    }

    #[test]
    fn l21_norm_example() {
        let model = PowerModel {
            groups: vec![SupportGroup { bs: 0, fc: 0, positions: 0..2, weight: 2.0 }],
            transmit_weights: vec![0.0, 0.0],
            sleep_total: 0.0,
            backhaul_w_per_bps: 0.0,
            epsilon: 1e-5,
        };
        assert!((model.total_power_l21(&[3.0, 4.0], 0.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_gap_shrinks_with_epsilon() {
        let (_, assoc, model) = fixture();
        let p: Vec<f64> = (0..assoc.len()).map(|i| 1e-3 * (1 + i % 7) as f64).collect();
        let exact = model.total_power_exact(&p, 2e6);
        let gaps: Vec<f64> = [1e-3, 1e-5, 1e-7]
            .iter()
            .map(|&e| (exact - model.total_power_smooth(&p, 2e6, e)).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    proptest! {
        #[test]
        fn exact_bounded_below_by_sleep(vals in prop::collection::vec(0.0f64..2.0, 168), mask in prop::collection::vec(any::<bool>(), 168)) {
            let (_, assoc, model) = fixture();
            let p: Vec<f64> = (0..assoc.len()).map(|i| if mask[i % 168] { vals[i % 168] } else { 0.0 }).collect();
            let total = model.total_power_exact(&p, 0.0);
            if p.iter().all(|&x| x == 0.0) {
                prop_assert_eq!(total, model.sleep_total);
            } else {
                prop_assert!(total > model.sleep_total);
            }
        }

        #[test]
        fn zeroing_a_group_saves_its_weight(vals in prop::collection::vec(1e-4f64..2.0, 168), g in 0usize..36) {
            let (_, assoc, model) = fixture();
            let p: Vec<f64> = (0..assoc.len()).map(|i| vals[i % 168]).collect();
            let mut q = p.clone();
            for i in model.groups[g].positions.clone() { q[i] = 0.0; }
            let saved = model.total_power_exact(&p, 1e6) - model.total_power_exact(&q, 1e6);
            prop_assert!(saved >= model.groups[g].weight - 1e-9);
        }

        #[test]
        fn smooth_below_exact_for_sums_up_to_one_watt(vals in prop::collection::vec(0.0f64..0.04, 168), eps_exp in 1i32..8) {
            let (_, assoc, model) = fixture();
            let p: Vec<f64> = (0..assoc.len()).map(|i| vals[i % 168]).collect();
            let eps = 10f64.powi(-eps_exp);
            prop_assert!(model.total_power_smooth(&p, 0.0, eps) <= model.total_power_exact(&p, 0.0) + 1e-9);
        }

        #[test]
        fn exact_is_permutation_invariant_within_groups(vals in prop::collection::vec(0.0f64..2.0, 168), g in 0usize..36, shift in 1usize..8) {
            let (_, assoc, model) = fixture();
            let p: Vec<f64> = (0..assoc.len()).map(|i| vals[i % 168]).collect();
            let mut q = p.clone();
            let r = model.groups[g].positions.clone();
            let len = r.len();
            for (j, i) in r.clone().enumerate() { q[i] = p[r.start + (j + shift) % len]; }
            let a = model.total_power_exact(&p, 0.0);
            let b = model.total_power_exact(&q, 0.0);
            // The transmit weights are constant within a (BS, carrier) group.
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn l21_group_term_is_homogeneous(a in 0.0f64..5.0, b in 0.0f64..5.0, t in 0.01f64..100.0) {
            let model = PowerModel {
                groups: vec![SupportGroup { bs: 0, fc: 0, positions: 0..2, weight: 1.5 }],
                transmit_weights: vec![0.0, 0.0],
                sleep_total: 0.0,
                backhaul_w_per_bps: 0.0,
                epsilon: 1e-5,
            };
            let base = model.total_power_l21(&[a, b], 0.0);
            prop_assert!((model.total_power_l21(&[t * a, t * b], 0.0) - t * base).abs() <= 1e-12 * (1.0 + t * base));
        }
    }
}
