//! Experiment runner: reads a flat config, runs pipeline stages and writes
//! stamped CSV/JSON artifacts under the output directory.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::CliError;
