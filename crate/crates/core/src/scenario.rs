//! Hexagonal two-tier layouts and the large-scale fading table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsClass {
    Macro,
    Pico,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub class: BsClass,
    pub position: Point,
    pub antennas: usize,
    pub p_max_w: f64,
    pub p_sleep_w: f64,
    pub pa_efficiency: f64,
    /// Macro cell the station belongs to.
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub id: usize,
    pub position: Point,
    pub rate_demand_bps: f64,
    pub train_power_w: f64,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCarrier {
    pub id: usize,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub pilot_length: u32,
    pub coherence_symbols: u32,
    pub lsf_symbols: u32,
}

impl FrequencyCarrier {
    /// Fraction of each coherence block left for downlink data.
    pub fn downlink_fraction(&self) -> f64 {
        if self.pilot_length >= self.coherence_symbols {
            0.0
        } else {
            1.0 - f64::from(self.pilot_length) / f64::from(self.coherence_symbols)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub bss: Vec<BaseStation>,
    pub ues: Vec<UserEquipment>,
    pub fcs: Vec<FrequencyCarrier>,
    /// Noise power spectral density in W/Hz.
    pub noise_density: f64,
    pub macro_radius_m: f64,
    pub rng_seed: u64,
    /// Hexagon centers, one per macro cell.
    pub cell_centers: Vec<Point>,
    pub macro_shadowing_db: f64,
    pub pico_shadowing_db: f64,
    pub macro_min_distance_m: f64,
    pub pico_min_distance_m: f64,
}

impl NetworkLayout {
    pub fn num_bs(&self) -> usize {
        self.bss.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn num_fcs(&self) -> usize {
        self.fcs.len()
    }

    pub fn shadowing_db(&self, class: BsClass) -> f64 {
        match class {
            BsClass::Macro => self.macro_shadowing_db,
            BsClass::Pico => self.pico_shadowing_db,
        }
    }

    pub fn min_distance_m(&self, class: BsClass) -> f64 {
        match class {
            BsClass::Macro => self.macro_min_distance_m,
            BsClass::Pico => self.pico_min_distance_m,
        }
    }

    /// Correctly rounded sum of the sleep powers.
    pub fn sleep_power_total(&self) -> f64 {
        compensated_sum(self.bss.iter().map(|b| b.p_sleep_w))
    }

    /// Replaces every UE's rate demand.
    pub fn set_demands(&mut self, rate_bps: f64) {
        for ue in &mut self.ues {
            ue.rate_demand_bps = rate_bps;
        }
    }
}

/// Neumaier summation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Per-class hardware parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassConfig {
    pub antennas: usize,
    pub p_max_w: f64,
    pub p_sleep_w: f64,
    pub pa_efficiency: f64,
    pub shadowing_db: f64,
    pub min_ue_distance_m: f64,
}

impl ClassConfig {
    pub fn macro_default() -> Self {
        Self {
            antennas: 8,
            p_max_w: 40.0,
            p_sleep_w: 75.0,
            pa_efficiency: 0.35,
            shadowing_db: 8.0,
            min_ue_distance_m: 35.0,
        }
    }

    pub fn pico_default() -> Self {
        Self {
            antennas: 4,
            p_max_w: 1.0,
            p_sleep_w: 4.3,
            pa_efficiency: 0.25,
            shadowing_db: 10.0,
            min_ue_distance_m: 10.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{name}: {what}")));
        if self.antennas == 0 {
            return bad("antennas must be at least 1");
        }
        if !(self.p_max_w > 0.0 && self.p_max_w.is_finite()) {
            return bad("p_max_w must be positive");
        }
        if !(self.p_sleep_w >= 0.0 && self.p_sleep_w.is_finite()) {
            return bad("p_sleep_w must be nonnegative");
        }
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency < 1.0) {
            return bad("pa_efficiency must lie in (0, 1)");
        }
        if !(self.shadowing_db >= 0.0 && self.shadowing_db.is_finite()) {
            return bad("shadowing_db must be nonnegative");
        }
        if !(self.min_ue_distance_m >= 0.0 && self.min_ue_distance_m.is_finite()) {
            return bad("min_ue_distance_m must be nonnegative");
        }
        Ok(())
    }
}

impl Default for ClassConfig {
    fn default() -> Self {
        Self::pico_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low_hz: f64,
    pub high_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub macro_cells: usize,
    pub picos_per_cell: usize,
    pub ues_per_cell: usize,
    pub cell_radius_m: f64,
    #[serde(rename = "macro")]
    pub macro_bs: ClassConfig,
    pub pico: ClassConfig,
    pub bands: Vec<Band>,
    /// Number of equal-width carriers each band is split into.
    pub carriers_per_band: usize,
    pub coherence_symbols: u32,
    /// Ratio between the LSF epoch and the coherence block.
    pub lsf_factor: u32,
    pub min_pilot_length: u32,
    pub noise_dbm_per_hz: f64,
    pub rate_demand_bps: f64,
    pub ue_train_power_w: f64,
    pub pico_macro_min_distance_m: f64,
    pub pico_pico_min_distance_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            macro_cells: 3,
            picos_per_cell: 5,
            ues_per_cell: 5,
            cell_radius_m: 250.0,
            macro_bs: ClassConfig::macro_default(),
            pico: ClassConfig::pico_default(),
            bands: vec![
                Band { low_hz: 783e6, high_hz: 803e6 },
                Band { low_hz: 1900e6, high_hz: 1920e6 },
            ],
            carriers_per_band: 1,
            coherence_symbols: 200,
            lsf_factor: 20,
            min_pilot_length: 8,
            noise_dbm_per_hz: -174.0,
            rate_demand_bps: 2e6,
            ue_train_power_w: 0.2,
            pico_macro_min_distance_m: 75.0,
            pico_pico_min_distance_m: 40.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.macro_cells == 0 {
            return Err(Error::Config("macro_cells must be at least 1".into()));
        }
        if !(self.cell_radius_m > 0.0 && self.cell_radius_m.is_finite()) {
            return Err(Error::Config("cell_radius_m must be positive".into()));
        }
        self.macro_bs.validate("macro")?;
        self.pico.validate("pico")?;
        if self.bands.is_empty() {
            return Err(Error::Config("at least one band is required".into()));
        }
        for b in &self.bands {
            if !(b.low_hz > 0.0 && b.high_hz > b.low_hz) {
                return Err(Error::Config(format!("invalid band [{}, {}]", b.low_hz, b.high_hz)));
            }
        }
        if self.carriers_per_band == 0 {
            return Err(Error::Config("carriers_per_band must be at least 1".into()));
        }
        if self.coherence_symbols == 0 || self.lsf_factor == 0 {
            return Err(Error::Config("coherence_symbols and lsf_factor must be positive".into()));
        }
        if !(self.rate_demand_bps >= 0.0 && self.rate_demand_bps.is_finite()) {
            return Err(Error::Config("rate_demand_bps must be nonnegative".into()));
        }
        if !(self.ue_train_power_w >= 0.0 && self.ue_train_power_w.is_finite()) {
            return Err(Error::Config("ue_train_power_w must be nonnegative".into()));
        }
        if !self.noise_dbm_per_hz.is_finite() {
            return Err(Error::Config("noise_dbm_per_hz must be finite".into()));
        }
        let ues = self.macro_cells * self.ues_per_cell;
        let tau = self.min_pilot_length.max(ues as u32);
        if tau >= self.coherence_symbols {
            return Err(Error::Config(format!(
                "pilot length {tau} leaves no downlink symbols in a {}-symbol block",
                self.coherence_symbols
            )));
        }
        Ok(())
    }

    pub fn carriers(&self, num_ues: usize) -> Vec<FrequencyCarrier> {
        let tau = self.min_pilot_length.max(num_ues as u32);
        let mut fcs = Vec::new();
        for band in &self.bands {
            let width = (band.high_hz - band.low_hz) / self.carriers_per_band as f64;
            for j in 0..self.carriers_per_band {
                fcs.push(FrequencyCarrier {
                    id: fcs.len(),
                    center_hz: band.low_hz + (j as f64 + 0.5) * width,
                    bandwidth_hz: width,
                    pilot_length: tau,
                    coherence_symbols: self.coherence_symbols,
                    lsf_symbols: self.coherence_symbols * self.lsf_factor,
                });
            }
        }
        fcs
    }
}

/// Centers of `count` pointy-top hexagons with circumradius `radius`,
/// filled ring by ring around the origin.
pub fn hex_centers(count: usize, radius: f64) -> Vec<Point> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let to_point = |q: i64, r: i64| {
        Point::new(SQRT3 * radius * (q as f64 + r as f64 / 2.0), 1.5 * radius * r as f64)
    };
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(to_point(0, 0));
    let mut ring = 1i64;
    while out.len() < count {
        let (mut q, mut r) = (DIRS[4].0 * ring, DIRS[4].1 * ring);
        for dir in DIRS {
            for _ in 0..ring {
                if out.len() == count {
                    return out;
                }
                out.push(to_point(q, r));
                q += dir.0;
                r += dir.1;
            }
        }
        ring += 1;
    }
    out
}

/// Point-in-hexagon test for a pointy-top hexagon.
pub fn in_hexagon(p: &Point, center: &Point, radius: f64) -> bool {
    let tol = 1e-9 * radius;
    let dx = (p.x - center.x).abs();
    let dy = (p.y - center.y).abs();
    dx <= SQRT3 / 2.0 * radius + tol && dy <= radius - dx / SQRT3 + tol
}

fn sample_in_hexagon<R: Rng>(
    rng: &mut R,
    center: &Point,
    radius: f64,
    accept: impl Fn(&Point) -> bool,
) -> Result<Point> {
    let half_w = SQRT3 / 2.0 * radius;
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let p = Point::new(
            center.x + rng.random_range(-half_w..=half_w),
            center.y + rng.random_range(-radius..=radius),
        );
        if in_hexagon(&p, center, radius) && accept(&p) {
            return Ok(p);
        }
    }
    Err(Error::Config(format!(
        "could not place a node inside the cell at ({:.1}, {:.1}) under the distance rules",
        center.x, center.y
    )))
}

pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<NetworkLayout> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = config.cell_radius_m;
    let centers = hex_centers(config.macro_cells, radius);

    let station = |id: usize, class: BsClass, position: Point, cell: usize| {
        let c = match class {
            BsClass::Macro => &config.macro_bs,
            BsClass::Pico => &config.pico,
        };
        BaseStation {
            id,
            class,
            position,
            antennas: c.antennas,
            p_max_w: c.p_max_w,
            p_sleep_w: c.p_sleep_w,
            pa_efficiency: c.pa_efficiency,
            cell,
        }
    };

    let mut bss: Vec<BaseStation> = centers
        .iter()
        .enumerate()
        .map(|(i, c)| station(i, BsClass::Macro, *c, i))
        .collect();

    for (cell, center) in centers.iter().enumerate() {
        for _ in 0..config.picos_per_cell {
            let p = sample_in_hexagon(&mut rng, center, radius, |p| {
                centers.iter().all(|m| m.distance(p) >= config.pico_macro_min_distance_m)
                    && bss
                        .iter()
                        .filter(|b| b.class == BsClass::Pico)
                        .all(|b| b.position.distance(p) >= config.pico_pico_min_distance_m)
            })?;
            let id = bss.len();
            bss.push(station(id, BsClass::Pico, p, cell));
        }
    }

    let mut ues = Vec::new();
    for (cell, center) in centers.iter().enumerate() {
        for _ in 0..config.ues_per_cell {
            let p = sample_in_hexagon(&mut rng, center, radius, |p| {
                bss.iter().all(|b| {
                    let min = match b.class {
                        BsClass::Macro => config.macro_bs.min_ue_distance_m,
                        BsClass::Pico => config.pico.min_ue_distance_m,
                    };
                    b.position.distance(p) >= min
                })
            })?;
            ues.push(UserEquipment {
                id: ues.len(),
                position: p,
                rate_demand_bps: config.rate_demand_bps,
                train_power_w: config.ue_train_power_w,
                cell,
            });
        }
    }

    let fcs = config.carriers(ues.len());
    Ok(NetworkLayout {
        bss,
        ues,
        fcs,
        noise_density: crate::dbm_per_hz_to_w(config.noise_dbm_per_hz),
        macro_radius_m: radius,
        rng_seed: seed,
        cell_centers: centers,
        macro_shadowing_db: config.macro_bs.shadowing_db,
        pico_shadowing_db: config.pico.shadowing_db,
        macro_min_distance_m: config.macro_bs.min_ue_distance_m,
        pico_min_distance_m: config.pico.min_ue_distance_m,
    })
}

/// Distance-dependent path loss in dB. The distance is clamped to `min_distance_m`.
pub fn path_loss_db(class: BsClass, distance_m: f64, center_hz: f64, min_distance_m: f64) -> f64 {
    let d_km = distance_m.max(min_distance_m).max(1e-3) / 1000.0;
    let freq_term = 20.0 * (center_hz / 1e9 / 2.0).log10();
    match class {
        BsClass::Macro => 128.1 + 37.6 * d_km.log10() + freq_term,
        BsClass::Pico => 140.7 + 36.7 * d_km.log10() + freq_term,
    }
}

/// Linear link gain including a shadowing realization in dB.
pub fn path_loss(
    bs: &BaseStation,
    ue: &UserEquipment,
    fc: &FrequencyCarrier,
    min_distance_m: f64,
    shadow_db: f64,
) -> f64 {
    let pl = path_loss_db(bs.class, bs.position.distance(&ue.position), fc.center_hz, min_distance_m);
    10f64.powf(-(pl + shadow_db) / 10.0)
}

/// K x L x F table of linear large-scale fading gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsfMap {
    k: usize,
    l: usize,
    f: usize,
    gains: Vec<f64>,
}

impl LsfMap {
    pub fn from_gains(k: usize, l: usize, f: usize, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != k * l * f {
            return Err(Error::Dimension(format!(
                "expected {} gains for a {k}x{l}x{f} map, got {}",
                k * l * f,
                gains.len()
            )));
        }
        if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Config("gains must be positive and finite".into()));
        }
        Ok(Self { k, l, f, gains })
    }

    /// Builds a map from a closure over (bs, ue, fc).
    pub fn from_fn(k: usize, l: usize, f: usize, g: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut gains = Vec::with_capacity(k * l * f);
        for bs in 0..k {
            for ue in 0..l {
                for fc in 0..f {
                    gains.push(g(bs, ue, fc));
                }
            }
        }
        Self::from_gains(k, l, f, gains)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.k, self.l, self.f)
    }

    #[inline]
    pub fn gain(&self, bs: usize, ue: usize, fc: usize) -> f64 {
        self.gains[(bs * self.l + ue) * self.f + fc]
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Mean gain in dB across carriers, the association ranking metric.
    pub fn mean_db(&self, bs: usize, ue: usize) -> f64 {
        (0..self.f).map(|fc| 10.0 * self.gain(bs, ue, fc).log10()).sum::<f64>() / self.f as f64
    }
}

/// Shadowing realizations in dB, one per (BS, UE) pair and shared across carriers.
pub fn draw_shadowing(layout: &NetworkLayout) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(layout.rng_seed);
    rng.set_stream(1);
    let mut out = Vec::with_capacity(layout.num_bs() * layout.num_ues());
    for bs in &layout.bss {
        let sigma = layout.shadowing_db(bs.class);
        for _ in &layout.ues {
            let z = if sigma > 0.0 {
                Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng)
            } else {
                0.0
            };
            out.push(z);
        }
    }
    out
}

pub fn build_lsf_map(layout: &NetworkLayout) -> LsfMap {
    let shadow = draw_shadowing(layout);
    let (k, l, f) = (layout.num_bs(), layout.num_ues(), layout.num_fcs());
    let mut gains = Vec::with_capacity(k * l * f);
    for (bi, bs) in layout.bss.iter().enumerate() {
        for (ui, ue) in layout.ues.iter().enumerate() {
            for fc in &layout.fcs {
                let min_d = layout.min_distance_m(bs.class);
                gains.push(path_loss(bs, ue, fc, min_d, shadow[bi * l + ui]));
            }
        }
    }
    LsfMap { k, l, f, gains }
}
