//! Experiment driver behind the `tensormg` binary.

pub mod config;
pub mod run;

pub use config::{parse_config, ExperimentConfig};
pub use run::{run_experiment, run_verification, CheckReport, Suite, VerifyOptions};
