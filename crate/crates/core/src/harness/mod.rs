//! Experiment orchestration: per-run data preparation, cross-validated
//! model selection, test evaluation, multi-run aggregation and m-sweeps.

mod aggregate;
mod config;
mod cv;
pub mod output;
mod presets;
mod run;
pub mod seeds;

pub use aggregate::{aggregate, format_table, mean_std, AggregateRow, Domain};
pub use config::{DataSource, ExperimentConfig, HyperGrid, Method, MissingnessConfig};
pub use cv::{cross_validate, fit_method, validation_score, CvOutcome, Selection};
pub use presets::Preset;
pub use run::{
    prepare_run, run_experiment, run_method, sweep_m, with_jobs, ExperimentOutcome, RunData, RunFailure, RunResult,
    SweepOutcome, SweepRow,
};
