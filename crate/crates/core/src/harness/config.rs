use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{Method, SolverConfig};
use crate::power_model::PowerModelParams;
use crate::scenario::ScenarioConfig;

/// Parameter varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Per-UE demand in Mbit/s.
    RateDemand,
    MacroAntennas,
    /// Carriers per band.
    FcSplitting,
    Epsilon,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] =
        [SweepAxis::RateDemand, SweepAxis::MacroAntennas, SweepAxis::FcSplitting, SweepAxis::Epsilon];

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::RateDemand => "rate_demand",
            SweepAxis::MacroAntennas => "macro_antennas",
            SweepAxis::FcSplitting => "fc_splitting",
            SweepAxis::Epsilon => "epsilon",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis '{s}'")))
    }

    /// Axis label with units, for plots.
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::RateDemand => "rate demand (Mbit/s)",
            SweepAxis::MacroAntennas => "macro BS antennas",
            SweepAxis::FcSplitting => "carriers per band",
            SweepAxis::Epsilon => "epsilon",
        }
    }

    fn check(&self, v: f64) -> Result<()> {
        let ok = match self {
            SweepAxis::RateDemand => v >= 0.0 && v.is_finite(),
            SweepAxis::MacroAntennas | SweepAxis::FcSplitting => v >= 1.0 && v.fract() == 0.0 && v <= 1e6,
            SweepAxis::Epsilon => v > 0.0 && v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{v} is not a valid {} value", self.name())))
        }
    }

    /// Applies one sweep value to copies of the scenario and power model.
    pub fn apply(&self, v: f64, scenario: &mut ScenarioConfig, power: &mut PowerModelParams) {
        match self {
            SweepAxis::RateDemand => scenario.rate_demand_bps = v * 1e6,
            SweepAxis::MacroAntennas => scenario.macro_bs.antennas = v as usize,
            SweepAxis::FcSplitting => scenario.carriers_per_band = v as usize,
            SweepAxis::Epsilon => power.epsilon = v,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub detail_csv: Option<PathBuf>,
    pub summary_csv: Option<PathBuf>,
    /// Mean power against the sweep value, one series per method.
    pub power_svg: Option<PathBuf>,
    /// Objective trajectories of the first trial at the first sweep value.
    pub trajectory_svg: Option<PathBuf>,
}

impl OutputPaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            detail_csv: Some(dir.join("detail.csv")),
            summary_csv: Some(dir.join("summary.csv")),
            power_svg: Some(dir.join("power.svg")),
            trajectory_svg: Some(dir.join("trajectories.svg")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub outputs: OutputPaths,
    /// Wall times are reported as 0 unless set, keeping outputs byte-stable.
    pub record_wall_time: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::RateDemand,
            values: vec![2.0],
            methods: Method::ALL.to_vec(),
            trials: 1,
            seed: 0,
            outputs: OutputPaths::default(),
            record_wall_time: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep values must not be empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        for v in &self.values {
            self.axis.check(*v)?;
        }
        Ok(())
    }
}

/// A complete run description: the scenario, the power model, the solver
/// settings and the experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub power_model: PowerModelParams,
    pub solver: SolverConfig,
    pub experiment: ExperimentSpec,
}

impl RunConfig {
    /// Parses a JSON document; missing fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The configuration with every default written out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.power_model.validate()?;
        self.solver.validate()?;
        self.experiment.validate()?;
        let mut scenario = self.scenario.clone();
        let mut power = self.power_model.clone();
        for v in &self.experiment.values {
            self.experiment.axis.apply(*v, &mut scenario, &mut power);
            scenario.validate()?;
            power.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_materializes_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
        assert!(cfg.to_json().contains("\"eps_th_w\""));
        assert!(cfg.to_json().contains("\"backhaul_w_per_100mbps\""));
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"scenario": {"macro_cells": 1}, "experiment": {"axis": "epsilon", "values": [0.1, 0.001], "methods": ["l21"]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario.macro_cells, 1);
        assert_eq!(cfg.scenario.picos_per_cell, 5);
        assert_eq!(cfg.experiment.axis, SweepAxis::Epsilon);
        assert_eq!(cfg.experiment.methods, vec![Method::L21]);
        assert_eq!(cfg.experiment.trials, 1);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for doc in [
            r#"{"experiment": {"values": []}}"#,
            r#"{"experiment": {"trials": 0}}"#,
            r#"{"experiment": {"axis": "fc_splitting", "values": [1.5]}}"#,
            r#"{"experiment": {"axis": "epsilon", "values": [0.0]}}"#,
            r#"{"experiment": {"axis": "bogus"}}"#,
        ] {
            assert!(RunConfig::from_json(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn sweep_values_are_applied() {
        let mut s = ScenarioConfig::default();
        let mut p = PowerModelParams::default();
        SweepAxis::RateDemand.apply(6.0, &mut s, &mut p);
        SweepAxis::MacroAntennas.apply(64.0, &mut s, &mut p);
        SweepAxis::FcSplitting.apply(4.0, &mut s, &mut p);
        SweepAxis::Epsilon.apply(1e-3, &mut s, &mut p);
        assert_eq!(s.rate_demand_bps, 6e6);
        assert_eq!(s.macro_bs.antennas, 64);
        assert_eq!(s.carriers_per_band, 4);
        assert_eq!(p.epsilon, 1e-3);
        for a in SweepAxis::ALL {
            assert_eq!(SweepAxis::parse(a.name()).unwrap(), a);
        }
    }
}
