//! Initial BS-UE association and the flattened power-vector index.

use std::ops::Range;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{LsfMap, NetworkLayout};

/// One transmit link `(bs, ue, fc)` occupying a single power-vector entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub bs: usize,
    pub ue: usize,
    pub fc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Association {
    served: Vec<Vec<usize>>,
    servers: Vec<Vec<usize>>,
    dropped: Vec<usize>,
    num_fcs: usize,
    bs_offsets: Vec<usize>,
    links: Vec<Link>,
}

impl Association {
    /// Builds an association from explicit per-BS served sets.
    pub fn from_served(mut served: Vec<Vec<usize>>, num_ues: usize, num_fcs: usize) -> Result<Self> {
        let mut servers = vec![Vec::new(); num_ues];
        for (k, set) in served.iter_mut().enumerate() {
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("BS {k} serves a UE twice")));
            }
            for &ue in set.iter() {
                if ue >= num_ues {
                    return Err(Error::Dimension(format!("BS {k} serves unknown UE {ue}")));
                }
                servers[ue].push(k);
            }
        }
        let dropped = (0..num_ues).filter(|&l| servers[l].is_empty()).collect();
        let mut bs_offsets = Vec::with_capacity(served.len() + 1);
        let mut links = Vec::new();
        for (k, set) in served.iter().enumerate() {
            bs_offsets.push(links.len());
            for fc in 0..num_fcs {
                for &ue in set {
                    links.push(Link { bs: k, ue, fc });
                }
            }
        }
        bs_offsets.push(links.len());
        Ok(Self { served, servers, dropped, num_fcs, bs_offsets, links })
    }

    pub fn served(&self, bs: usize) -> &[usize] {
        &self.served[bs]
    }

    pub fn servers(&self, ue: usize) -> &[usize] {
        &self.servers[ue]
    }

    pub fn dropped_ues(&self) -> &[usize] {
        &self.dropped
    }

    pub fn is_dropped(&self, ue: usize) -> bool {
        self.servers[ue].is_empty()
    }

    pub fn num_bs(&self) -> usize {
        self.served.len()
    }

    pub fn num_ues(&self) -> usize {
        self.servers.len()
    }

    pub fn num_fcs(&self) -> usize {
        self.num_fcs
    }

    /// Length of the flattened power vector.
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, pos: usize) -> Link {
        self.links[pos]
    }

    /// All positions owned by BS `bs` (every carrier).
    pub fn bs_positions(&self, bs: usize) -> Range<usize> {
        self.bs_offsets[bs]..self.bs_offsets[bs + 1]
    }

    /// Positions of BS `bs` on carrier `fc`.
    pub fn bs_fc_positions(&self, bs: usize, fc: usize) -> Range<usize> {
        let n = self.served[bs].len();
        let start = self.bs_offsets[bs] + fc * n;
        start..start + n
    }

    pub fn position(&self, bs: usize, ue: usize, fc: usize) -> Option<usize> {
        if bs >= self.served.len() || fc >= self.num_fcs {
            return None;
        }
        let idx = self.served[bs].binary_search(&ue).ok()?;
        Some(self.bs_fc_positions(bs, fc).start + idx)
    }
}

/// Each BS keeps the `min(N_k, L)` UEs with the largest mean dB gain across
/// carriers; ties go to the lower UE index.
pub fn initial_association(lsf: &LsfMap, layout: &NetworkLayout) -> Association {
    let (k, l, f) = lsf.dims();
    let served = (0..k)
        .map(|bs| {
            let mut order: Vec<(f64, usize)> = (0..l).map(|ue| (lsf.mean_db(bs, ue), ue)).collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            order.truncate(layout.bss[bs].antennas.min(l));
            order.into_iter().map(|(_, ue)| ue).collect()
        })
        .collect();
    Association::from_served(served, l, f).expect("selection yields a valid association")
}

fn binomial(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Upper bound on the number of distinct associations:
/// the sum over BSs of `C(L, 1) + ... + C(L, min(F N_k, L))`.
pub fn association_count_bound(layout: &NetworkLayout) -> BigUint {
    let l = layout.num_ues() as u64;
    let f = layout.num_fcs() as u64;
    let mut total = BigUint::from(0u32);
    for bs in &layout.bss {
        let top = (f * bs.antennas as u64).min(l);
        for n in 1..=top {
            total += binomial(l, n);
        }
    }
    total
}
