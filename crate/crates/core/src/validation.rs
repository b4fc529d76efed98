//! Monte-Carlo small-scale fading with MMSE estimates and MRT precoding,
//! used to measure the model-based rate and its expectation identities.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::Association;
use crate::channel::{avg_rate_fc, build_rate_coefficients, estimation_quality, ChannelQuality, PilotPlan};
use crate::error::{Error, Result};
use crate::scenario::{generate_scenario, LsfMap, NetworkLayout, ScenarioConfig};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl McEstimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std_error: (var / n as f64).sqrt(), trials: n }
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// One channel realization `h = h_hat + e` with unit-variance entries,
/// `h_hat ~ CN(0, delta I)` and independent `e ~ CN(0, (1 - delta) I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsfDraw {
    pub channel: Vec<Complex64>,
    pub estimate: Vec<Complex64>,
    pub error: Vec<Complex64>,
}

fn cn(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

impl SsfDraw {
    pub fn sample(rng: &mut impl Rng, antennas: usize, delta: f64) -> Self {
        let estimate: Vec<Complex64> = (0..antennas).map(|_| cn(rng, delta)).collect();
        let error: Vec<Complex64> = (0..antennas).map(|_| cn(rng, 1.0 - delta)).collect();
        let channel = estimate.iter().zip(&error).map(|(a, b)| a + b).collect();
        Self { channel, estimate, error }
    }

    fn rotate(&mut self, phase: Complex64) {
        for v in self.channel.iter_mut().chain(&mut self.estimate).chain(&mut self.error) {
            *v *= phase;
        }
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Unit MRT direction along `estimate`; an isotropic direction when the
/// estimate carries no information.
fn mrt_direction(rng: &mut impl Rng, estimate: &[Complex64]) -> Vec<Complex64> {
    let mut v = estimate.to_vec();
    let mut len = norm(&v);
    while len == 0.0 {
        v = (0..estimate.len()).map(|_| cn(rng, 1.0)).collect();
        len = norm(&v);
    }
    v.iter().map(|x| x / len).collect()
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Everything needed to synthesize small-scale fading on a fixed association.
pub struct RateSimulator<'a> {
    pub layout: &'a NetworkLayout,
    pub assoc: &'a Association,
    pub lsf: &'a LsfMap,
    pub quality: &'a ChannelQuality,
}

impl<'a> RateSimulator<'a> {
    pub fn new(layout: &'a NetworkLayout, assoc: &'a Association, lsf: &'a LsfMap, quality: &'a ChannelQuality) -> Self {
        Self { layout, assoc, lsf, quality }
    }

    fn check(&self, p: &[f64], ue: usize, fc: usize, trials: usize) -> Result<()> {
        if p.len() != self.assoc.len() {
            return Err(Error::Dimension(format!("power vector has {} entries, expected {}", p.len(), self.assoc.len())));
        }
        if ue >= self.assoc.num_ues() || fc >= self.assoc.num_fcs() {
            return Err(Error::Dimension(format!("no UE {ue} on carrier {fc}")));
        }
        if trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        Ok(())
    }

    /// Instantaneous spectral efficiency of `ue` on `fc` for one trial.
    fn sample_rate(&self, p: &[f64], ue: usize, fc: usize, rng: &mut ChaCha8Rng, phase: Complex64) -> f64 {
        let noise = self.layout.fcs[fc].bandwidth_hz * self.layout.noise_density;
        let mut desired = 0.0;
        let mut interference = 0.0;
        for bs in 0..self.assoc.num_bs() {
            let n = self.layout.bss[bs].antennas;
            let served = self.assoc.served(bs);
            let positions = self.assoc.bs_fc_positions(bs, fc);
            let own_delta = if served.contains(&ue) { self.quality.delta(bs, ue, fc) } else { 0.0 };
            let mut to_ue = SsfDraw::sample(rng, n, own_delta);
            to_ue.rotate(phase);
            let gain = self.lsf.gain(bs, ue, fc).sqrt();
            for (j, pos) in served.iter().zip(positions) {
                let power = p[pos];
                let direction = if *j == ue {
                    mrt_direction(rng, &to_ue.estimate)
                } else {
                    let mut other = SsfDraw::sample(rng, n, self.quality.delta(bs, *j, fc));
                    other.rotate(phase);
                    mrt_direction(rng, &other.estimate)
                };
                if power == 0.0 {
                    continue;
                }
                let y = gain * power.sqrt() * inner(&to_ue.channel, &direction);
                if *j == ue {
                    desired += y.norm_sqr();
                } else {
                    interference += y.norm_sqr();
                }
            }
        }
        (desired / (noise + interference)).ln_1p() / std::f64::consts::LN_2
    }

    /// Mean of `log2(1 + SINR)` over `trials` fading draws, with every
    /// channel multiplied by `exp(i phase)`.
    pub fn average_rate_rotated(
        &self,
        p: &[f64],
        ue: usize,
        fc: usize,
        trials: usize,
        seed: u64,
        phase: f64,
    ) -> Result<McEstimate> {
        self.check(p, ue, fc, trials)?;
        let rot = Complex64::from_polar(1.0, phase);
        let samples: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| self.sample_rate(p, ue, fc, &mut trial_rng(seed, t), rot))
            .collect();
        Ok(McEstimate::from_samples(&samples))
    }

    pub fn average_rate(&self, p: &[f64], ue: usize, fc: usize, trials: usize, seed: u64) -> Result<McEstimate> {
        self.average_rate_rotated(p, ue, fc, trials, seed, 0.0)
    }
}

/// Monte-Carlo average spectral efficiency of `ue` on `fc` in bits/s/Hz.
#[allow(clippy::too_many_arguments)]
pub fn mc_average_rate(
    p: &[f64],
    layout: &NetworkLayout,
    assoc: &Association,
    lsf: &LsfMap,
    quality: &ChannelQuality,
    ue: usize,
    fc: usize,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    RateSimulator::new(layout, assoc, lsf, quality).average_rate(p, ue, fc, trials, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub antennas: usize,
    pub delta: f64,
    /// Sample mean of `|h^H w|^2` with `w` the MRT direction of `h`'s own estimate.
    pub own: McEstimate,
    /// Sample mean of `|h^H w|^2` with `w` the MRT direction of an independent UE.
    pub cross: McEstimate,
}

impl IdentityReport {
    pub fn own_expected(&self) -> f64 {
        self.delta * (self.antennas as f64 - 1.0) + 1.0
    }

    pub fn cross_expected(&self) -> f64 {
        1.0
    }
}

/// Sample means of the own-link and cross-link beamforming gains.
pub fn expectation_identities(antennas: usize, delta: f64, trials: usize, seed: u64) -> Result<IdentityReport> {
    if antennas == 0 || trials == 0 {
        return Err(Error::Config("antennas and trials must be positive".into()));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config("delta must lie in [0, 1]".into()));
    }
    let pairs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let link = SsfDraw::sample(&mut rng, antennas, delta);
            let other = SsfDraw::sample(&mut rng, antennas, delta);
            let own_dir = mrt_direction(&mut rng, &link.estimate);
            let other_dir = mrt_direction(&mut rng, &other.estimate);
            (inner(&link.channel, &own_dir).norm_sqr(), inner(&link.channel, &other_dir).norm_sqr())
        })
        .collect();
    let own: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cross: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(IdentityReport {
        antennas,
        delta,
        own: McEstimate::from_samples(&own),
        cross: McEstimate::from_samples(&cross),
    })
}

/// Two BSs with `antennas` antennas each serving one UE on a single
/// 20 MHz carrier, with randomized SNR, interference-to-noise ratio and
/// training SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferencePair {
    pub layout: NetworkLayout,
    pub assoc: Association,
    pub lsf: LsfMap,
    pub quality: ChannelQuality,
    pub p: Vec<f64>,
}

impl InterferencePair {
    /// Link SNR in [-10, 10] dB, INR in [-20, -6] dB and training SNR in
    /// [0, 20] dB, all at 1 mW per link.
    pub fn random(antennas: usize, seed: u64) -> Result<Self> {
        let mut cfg = ScenarioConfig { macro_cells: 2, picos_per_cell: 0, ues_per_cell: 1, ..Default::default() };
        cfg.macro_bs.antennas = antennas;
        cfg.bands.truncate(1);
        let mut layout = generate_scenario(&cfg, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let noise = layout.fcs[0].bandwidth_hz * layout.noise_density;
        let power = 1e-3;
        let db = |v: f64| 10f64.powf(v / 10.0);
        let mut gains = vec![0.0; 4];
        for k in 0..2 {
            for l in 0..2 {
                let ratio = if k == l { db(rng.random_range(-10.0..10.0)) } else { db(rng.random_range(-20.0..-6.0)) };
                gains[k * 2 + l] = ratio * noise / power;
            }
        }
        let tau = f64::from(layout.fcs[0].pilot_length);
        for l in 0..2 {
            layout.ues[l].train_power_w = db(rng.random_range(0.0..20.0)) * noise / (tau * gains[l * 2 + l]);
        }
        let lsf = LsfMap::from_gains(2, 2, 1, gains)?;
        let assoc = Association::from_served(vec![vec![0], vec![1]], 2, 1)?;
        let plan = PilotPlan::orthogonal(&assoc, &layout);
        let quality = estimation_quality(&lsf, &plan, &layout);
        Ok(Self { p: vec![power; assoc.len()], layout, assoc, lsf, quality })
    }

    pub fn simulator(&self) -> RateSimulator<'_> {
        RateSimulator::new(&self.layout, &self.assoc, &self.lsf, &self.quality)
    }

    /// Model-based spectral efficiency of `ue`.
    pub fn model_rate(&self, ue: usize) -> f64 {
        let coeffs = build_rate_coefficients(&self.lsf, &self.quality, &self.assoc, &self.layout);
        avg_rate_fc(&self.p, &coeffs, ue, 0)
    }
}

/// Pilot-based uplink training on one carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetup {
    pub antennas: usize,
    pub pilot_length: usize,
    pub noise_w: f64,
    /// Per UE: training power in Watts and LSF gain towards the BS.
    pub ues: Vec<(f64, f64)>,
    /// Pilot index of each UE; equal indices share a sequence.
    pub pilot_of: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Estimation quality predicted by the closed form, per UE.
    pub delta: Vec<f64>,
    /// Per-entry sample variance of the estimate, per UE.
    pub estimate_var: Vec<McEstimate>,
    pub error_var: Vec<McEstimate>,
    /// Real part of the per-entry sample covariance `E[e conj(h_hat)]`.
    pub cross_cov: Vec<McEstimate>,
}

/// Simulates the received pilot block `Y = sum_j sqrt(p_j alpha_j) h_j phi_j^T + Z`
/// with DFT pilot sequences, applies the per-UE MMSE filter, and compares
/// the estimate and error statistics with the closed-form quality.
pub fn training_cross_check(setup: &TrainingSetup, trials: usize, seed: u64) -> Result<TrainingReport> {
    let l = setup.ues.len();
    if setup.pilot_of.len() != l || trials == 0 || setup.antennas == 0 {
        return Err(Error::Config("inconsistent training setup".into()));
    }
    if setup.pilot_of.iter().any(|&m| m >= setup.pilot_length) {
        return Err(Error::Config("pilot index exceeds the pilot length".into()));
    }
    let tau = setup.pilot_length;
    let pilot = |m: usize| -> Vec<Complex64> {
        (0..tau)
            .map(|t| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (m * t) as f64 / tau as f64))
            .collect()
    };
    let pilots: Vec<Vec<Complex64>> = setup.pilot_of.iter().map(|&m| pilot(m)).collect();
    let energy = |j: usize| tau as f64 * setup.ues[j].0 * setup.ues[j].1;
    let delta: Vec<f64> = (0..l)
        .map(|u| {
            let contam: f64 = (0..l).filter(|&j| j != u && setup.pilot_of[j] == setup.pilot_of[u]).map(energy).sum();
            crate::channel::mmse_quality(energy(u), contam, setup.noise_w)
        })
        .collect();

    let per_trial: Vec<Vec<(f64, f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let n = setup.antennas;
            let h: Vec<Vec<Complex64>> = (0..l).map(|_| (0..n).map(|_| cn(&mut rng, 1.0)).collect()).collect();
            let mut y = vec![vec![Complex64::new(0.0, 0.0); tau]; n];
            for (a, row) in y.iter_mut().enumerate() {
                for (s, v) in row.iter_mut().enumerate() {
                    *v = cn(&mut rng, setup.noise_w);
                    for j in 0..l {
                        *v += (setup.ues[j].0 * setup.ues[j].1).sqrt() * h[j][a] * pilots[j][s];
                    }
                }
            }
            (0..l)
                .map(|u| {
                    let amp = (setup.ues[u].0 * setup.ues[u].1).sqrt();
                    let den = energy(u)
                        + (0..l).filter(|&j| j != u && setup.pilot_of[j] == setup.pilot_of[u]).map(energy).sum::<f64>()
                        + setup.noise_w;
                    let filt = amp / den;
                    let mut est = 0.0;
                    let mut err = 0.0;
                    let mut cov = 0.0;
                    for a in 0..n {
                        let proj: Complex64 = y[a].iter().zip(&pilots[u]).map(|(v, ph)| v * ph.conj()).sum();
                        let hat = filt * proj;
                        let e = h[u][a] - hat;
                        est += hat.norm_sqr();
                        err += e.norm_sqr();
                        cov += (e * hat.conj()).re;
                    }
                    (est / n as f64, err / n as f64, cov / n as f64)
                })
                .collect()
        })
        .collect();
    let column = |u: usize, pick: fn(&(f64, f64, f64)) -> f64| {
        McEstimate::from_samples(&per_trial.iter().map(|r| pick(&r[u])).collect::<Vec<_>>())
    };
    Ok(TrainingReport {
        delta,
        estimate_var: (0..l).map(|u| column(u, |r| r.0)).collect(),
        error_var: (0..l).map(|u| column(u, |r| r.1)).collect(),
        cross_cov: (0..l).map(|u| column(u, |r| r.2)).collect(),
    })
}
