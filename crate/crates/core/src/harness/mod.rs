//! Experiment configuration, Monte Carlo driver and result files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ChannelKind, ExperimentConfig};
pub use output::{emit, emit_bounds, read_results, BoundRow, Format, ResultRow};
pub use run::{
    bound_table, draw_channel, run_experiment, run_trial, summarize, sweep, trial_rng, Summary,
    SweepAxis,
};
