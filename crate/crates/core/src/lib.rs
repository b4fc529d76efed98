//! Downlink energy minimization for two-tier heterogeneous networks.
//!
//! The crate covers scenario generation, BS-UE association, the model-based
//! rate expressions, the flexible BS power model, the successive convex
//! approximation solver with its barrier inner solver, Monte-Carlo
//! validation of the rate model, and an experiment harness.

pub mod association;
pub mod channel;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod power_model;
pub mod scenario;
pub mod validation;

pub use association::{association_count_bound, initial_association, Association, Link};
pub use channel::{
    avg_rate_fc, build_rate_coefficients, estimation_quality, ue_rate, ChannelQuality, PilotPlan,
    RateCoefficients,
};
pub use error::{Error, Result};
pub use harness::{
    emit_outputs, grid_search_optimum, run_experiment, AggregateRow, DetailRow, ExperimentSpec, GridOptimum, ResultTable,
    RunConfig, SweepAxis, TrialStatus,
};
pub use optimizer::{
    enumerate_restricted_optimum, find_feasible_start, kkt_residual, sca_solve, solve,
    solve_inner, solve_l21, solve_min_transmit_power, DualVariables, KktResidual, Method,
    ProblemInstance, Restriction, RestrictedOptimum, SolveStatus, SolverConfig, SolverReport,
};
pub use power_model::{group_sparsity, sp_weight, Grouping, PowerModel, PowerModelParams};
pub use scenario::{
    build_lsf_map, generate_scenario, path_loss, BaseStation, BsClass, FrequencyCarrier, LsfMap,
    NetworkLayout, ScenarioConfig, UserEquipment,
};
pub use validation::{
    expectation_identities, mc_average_rate, training_cross_check, IdentityReport, InterferencePair, McEstimate, RateSimulator,
    SsfDraw, TrainingReport, TrainingSetup,
};

/// Thermal noise density of -174 dBm/Hz expressed in W/Hz.
pub fn dbm_per_hz_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
