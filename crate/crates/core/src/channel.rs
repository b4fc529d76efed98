//! Channel estimation quality and the model-based average rates.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::association::Association;
use crate::error::{Error, Result};
use crate::scenario::{LsfMap, NetworkLayout};

/// Pilot assignment on one carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierPilots {
    pub ues: Vec<usize>,
    /// Partition of `ues`; members of a group share one pilot sequence.
    pub groups: Vec<Vec<usize>>,
    pub pilot_length: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPlan {
    pub carriers: Vec<CarrierPilots>,
}

impl PilotPlan {
    /// Every served UE on every carrier with its own pilot.
    pub fn orthogonal(assoc: &Association, layout: &NetworkLayout) -> Self {
        Self::with_reuse(assoc, layout, usize::MAX).expect("orthogonal plan is always valid")
    }

    /// Served UEs assigned round-robin to `pilots` sequences per carrier.
    pub fn with_reuse(assoc: &Association, layout: &NetworkLayout, pilots: usize) -> Result<Self> {
        if pilots == 0 {
            return Err(Error::Config("at least one pilot sequence is required".into()));
        }
        let ues: Vec<usize> = (0..assoc.num_ues()).filter(|&l| !assoc.is_dropped(l)).collect();
        let count = pilots.min(ues.len());
        let carriers = layout
            .fcs
            .iter()
            .map(|fc| {
                let mut groups = vec![Vec::new(); count];
                for (i, &ue) in ues.iter().enumerate() {
                    groups[i % count.max(1)].push(ue);
                }
                CarrierPilots { ues: ues.clone(), groups, pilot_length: fc.pilot_length }
            })
            .collect();
        let plan = Self { carriers };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for (f, c) in self.carriers.iter().enumerate() {
            let mut members: Vec<usize> = c.groups.iter().flatten().copied().collect();
            members.sort_unstable();
            let mut ues = c.ues.clone();
            ues.sort_unstable();
            if members != ues {
                return Err(Error::Config(format!("pilot groups on carrier {f} do not partition its UEs")));
            }
            if c.groups.len() > c.pilot_length as usize {
                return Err(Error::Config(format!(
                    "carrier {f} uses {} pilots but the pilot length is {}",
                    c.groups.len(),
                    c.pilot_length
                )));
            }
        }
        Ok(())
    }

    /// UEs sharing `ue`'s pilot on carrier `fc`, excluding `ue` itself.
    pub fn contaminators(&self, fc: usize, ue: usize) -> impl Iterator<Item = usize> + '_ {
        self.carriers[fc]
            .groups
            .iter()
            .find(|g| g.contains(&ue))
            .into_iter()
            .flatten()
            .copied()
            .filter(move |&j| j != ue)
    }

    pub fn uses(&self, fc: usize, ue: usize) -> bool {
        self.carriers[fc].ues.contains(&ue)
    }
}

/// MMSE estimation quality from own and contaminating training energies.
pub fn mmse_quality(own: f64, contamination: f64, noise: f64) -> f64 {
    let den = own + contamination + noise;
    if den > 0.0 {
        own / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelQuality {
    k: usize,
    l: usize,
    f: usize,
    delta: Vec<f64>,
}

impl ChannelQuality {
    #[inline]
    pub fn delta(&self, bs: usize, ue: usize, fc: usize) -> f64 {
        self.delta[(bs * self.l + ue) * self.f + fc]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.k, self.l, self.f)
    }

    /// A uniform quality table, used by tests and synthetic instances.
    pub fn uniform(k: usize, l: usize, f: usize, delta: f64) -> Self {
        Self { k, l, f, delta: vec![delta; k * l * f] }
    }
}

pub fn estimation_quality(lsf: &LsfMap, plan: &PilotPlan, layout: &NetworkLayout) -> ChannelQuality {
    let (k, l, f) = lsf.dims();
    let mut delta = vec![0.0; k * l * f];
    for (fc, pilots) in plan.carriers.iter().enumerate() {
        let tau = f64::from(pilots.pilot_length);
        let noise = layout.fcs[fc].bandwidth_hz * layout.noise_density;
        for &ue in &pilots.ues {
            for bs in 0..k {
                let own = tau * layout.ues[ue].train_power_w * lsf.gain(bs, ue, fc);
                let contam: f64 = plan
                    .contaminators(fc, ue)
                    .map(|j| tau * layout.ues[j].train_power_w * lsf.gain(bs, j, fc))
                    .sum();
                delta[(bs * l + ue) * f + fc] = mmse_quality(own, contam, noise);
            }
        }
    }
    ChannelQuality { k, l, f, delta }
}

/// Desired and interference gain vectors of one UE on one carrier, indexed by
/// the carrier-local position order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTerm {
    pub total: Vec<f64>,
    pub interference: Vec<f64>,
    /// Local indices of the UE's own links on this carrier.
    pub own: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCoefficients {
    num_positions: usize,
    fc_positions: Vec<Vec<usize>>,
    noise: Vec<f64>,
    weight: Vec<f64>,
    terms: Vec<Option<Vec<RateTerm>>>,
}

impl RateCoefficients {
    /// Assembles coefficients from explicit per-carrier data. `terms[ue]` is
    /// `None` for a UE without serving links.
    pub fn from_parts(
        num_positions: usize,
        fc_positions: Vec<Vec<usize>>,
        noise: Vec<f64>,
        weight: Vec<f64>,
        terms: Vec<Option<Vec<RateTerm>>>,
    ) -> Result<Self> {
        let f = fc_positions.len();
        if noise.len() != f || weight.len() != f {
            return Err(Error::Dimension("noise and weight need one entry per carrier".into()));
        }
        let mut seen = vec![false; num_positions];
        for &p in fc_positions.iter().flatten() {
            if p >= num_positions || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Dimension(format!("position {p} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Dimension("every position must belong to one carrier".into()));
        }
        for per_fc in terms.iter().flatten() {
            if per_fc.len() != f {
                return Err(Error::Dimension("each UE needs one rate term per carrier".into()));
            }
            for (t, pos) in per_fc.iter().zip(&fc_positions) {
                if t.total.len() != pos.len() || t.interference.len() != pos.len() || t.own.iter().any(|&i| i >= pos.len()) {
                    return Err(Error::Dimension("rate term length does not match its carrier".into()));
                }
                for i in 0..pos.len() {
                    let own = t.own.contains(&i);
                    if t.interference[i] < 0.0 || (own && t.interference[i] != 0.0) || (!own && t.total[i] != t.interference[i]) {
                        return Err(Error::Config("rate terms must differ only on the UE's own links".into()));
                    }
                }
            }
        }
        Ok(Self { num_positions, fc_positions, noise, weight, terms })
    }

    pub fn num_positions(&self) -> usize {
        self.num_positions
    }

    pub fn num_fcs(&self) -> usize {
        self.fc_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.terms.len()
    }

    /// Global positions on carrier `fc`, in increasing order.
    pub fn fc_positions(&self, fc: usize) -> &[usize] {
        &self.fc_positions[fc]
    }

    /// Noise power `W_f sigma^2` on carrier `fc`.
    pub fn noise(&self, fc: usize) -> f64 {
        self.noise[fc]
    }

    /// Downlink-fraction-weighted bandwidth of carrier `fc`.
    pub fn weight(&self, fc: usize) -> f64 {
        self.weight[fc]
    }

    pub fn term(&self, ue: usize, fc: usize) -> Option<&RateTerm> {
        self.terms[ue].as_ref().map(|t| &t[fc])
    }

    pub fn is_active(&self, ue: usize) -> bool {
        self.terms[ue].is_some()
    }

    /// Keeps only the listed global positions, renumbered in the given order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut new_index = vec![usize::MAX; self.num_positions];
        for (i, &p) in keep.iter().enumerate() {
            new_index[p] = i;
        }
        let mut local_keep = Vec::with_capacity(self.num_fcs());
        let mut fc_positions = Vec::with_capacity(self.num_fcs());
        for positions in &self.fc_positions {
            let kept: Vec<usize> = (0..positions.len()).filter(|&i| new_index[positions[i]] != usize::MAX).collect();
            let mut mapped: Vec<(usize, usize)> = kept.iter().map(|&i| (new_index[positions[i]], i)).collect();
            mapped.sort_unstable();
            fc_positions.push(mapped.iter().map(|m| m.0).collect());
            local_keep.push(mapped.iter().map(|m| m.1).collect::<Vec<_>>());
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                t.as_ref().map(|per_fc| {
                    per_fc
                        .iter()
                        .zip(&local_keep)
                        .map(|(term, keep)| {
                            let mut old_to_new = vec![usize::MAX; term.total.len()];
                            for (j, &i) in keep.iter().enumerate() {
                                old_to_new[i] = j;
                            }
                            RateTerm {
                                total: keep.iter().map(|&i| term.total[i]).collect(),
                                interference: keep.iter().map(|&i| term.interference[i]).collect(),
                                own: term
                                    .own
                                    .iter()
                                    .filter_map(|&i| (old_to_new[i] != usize::MAX).then_some(old_to_new[i]))
                                    .collect(),
                            }
                        })
                        .collect()
                })
            })
            .collect();
        Self {
            num_positions: keep.len(),
            fc_positions,
            noise: self.noise.clone(),
            weight: self.weight.clone(),
            terms,
        }
    }
}

pub fn build_rate_coefficients(
    lsf: &LsfMap,
    quality: &ChannelQuality,
    assoc: &Association,
    layout: &NetworkLayout,
) -> RateCoefficients {
    let f = assoc.num_fcs();
    let mut fc_positions = vec![Vec::new(); f];
    for (pos, link) in assoc.links().iter().enumerate() {
        fc_positions[link.fc].push(pos);
    }
    let noise = layout.fcs.iter().map(|c| c.bandwidth_hz * layout.noise_density).collect();
    let weight = layout.fcs.iter().map(|c| c.downlink_fraction() * c.bandwidth_hz).collect();
    let terms = (0..assoc.num_ues())
        .map(|ue| {
            if assoc.is_dropped(ue) {
                return None;
            }
            Some(
                (0..f)
                    .map(|fc| {
                        let positions = &fc_positions[fc];
                        let mut total = Vec::with_capacity(positions.len());
                        let mut interference = Vec::with_capacity(positions.len());
                        let mut own = Vec::new();
                        for (i, &pos) in positions.iter().enumerate() {
                            let link = assoc.link(pos);
                            let alpha = lsf.gain(link.bs, ue, fc);
                            if link.ue == ue {
                                let n = layout.bss[link.bs].antennas as f64;
                                let d = quality.delta(link.bs, ue, fc);
                                total.push(alpha * (d * (n - 1.0) + 1.0));
                                interference.push(0.0);
                                own.push(i);
                            } else {
                                total.push(alpha);
                                interference.push(alpha);
                            }
                        }
                        RateTerm { total, interference, own }
                    })
                    .collect(),
            )
        })
        .collect();
    RateCoefficients { num_positions: assoc.len(), fc_positions, noise, weight, terms }
}

/// Inner products of the desired and interference vectors with `p`.
pub(crate) fn term_dots(p: &[f64], positions: &[usize], term: &RateTerm) -> (f64, f64) {
    let mut b = 0.0;
    for (i, &pos) in positions.iter().enumerate() {
        b += term.interference[i] * p[pos];
    }
    let mut own = 0.0;
    for &i in &term.own {
        own += (term.total[i] - term.interference[i]) * p[positions[i]];
    }
    (own, b)
}

/// Model-based spectral efficiency of UE `ue` on carrier `fc` in bits/s/Hz.
pub fn avg_rate_fc(p: &[f64], coeffs: &RateCoefficients, ue: usize, fc: usize) -> f64 {
    let Some(term) = coeffs.term(ue, fc) else {
        return 0.0;
    };
    let (own, b) = term_dots(p, coeffs.fc_positions(fc), term);
    (own / (coeffs.noise(fc) + b)).ln_1p() / LN_2
}

/// Model-based UE rate in bits/s, summed over carriers.
pub fn ue_rate(p: &[f64], coeffs: &RateCoefficients, ue: usize) -> f64 {
    (0..coeffs.num_fcs()).map(|fc| coeffs.weight(fc) * avg_rate_fc(p, coeffs, ue, fc)).sum()
}
