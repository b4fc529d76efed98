//! Experiment configuration, sweeps, output and small-instance oracles.

mod config;
mod experiment;
mod oracle;
mod output;

pub use config::{ExperimentSpec, OutputPaths, RunConfig, SweepAxis};
pub use experiment::{
    mean_std, run_experiment, trial_seed, AggregateRow, DetailRow, ResultTable, TrialStatus, Trajectory,
};
pub use oracle::{grid_search_optimum, tiny_scenario, GridOptimum};
pub use output::{
    emit_outputs, power_plot, read_detail_csv, trajectory_plot, write_detail_csv, write_summary_csv, LinePlot,
    Series, DETAIL_HEADER, SUMMARY_HEADER,
};
