//! Experiment harness around `loe-core`: synthetic data, flat TOML
//! experiment configs, protocol drivers and CSV/JSON reports.

pub mod config;
pub mod presets;
pub mod run;
pub mod synth;

pub use config::ExperimentConfig;
pub use run::{run_experiment, ExperimentResult, RunRecord};
