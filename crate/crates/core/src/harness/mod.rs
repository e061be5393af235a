//! Experiment orchestration: configuration, runs, persistence, aggregation
//! and plots.

pub mod aggregate;
pub mod config;
pub mod record;
pub mod run;

pub use aggregate::{aggregate_and_plot, mean_stderr, moving_average, PlotOptions, Summary};
pub use config::{AlgorithmSpec, ExperimentConfig, Scalers};
pub use record::{csv_header, read_csv, RunAudit, RunRecord, RunRow};
pub use run::{
    load_config, prepare_instance, run_experiment, run_single, ExperimentOutcome, Manifest,
    PreparedInstance,
};
