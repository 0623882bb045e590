//! Experiment runner for the two-mode squeezed interferometer readout model:
//! configuration, loss calibration, figure-style experiments and run manifests.

pub mod calibrate;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiments::{rerun, run, RunOutcome};
