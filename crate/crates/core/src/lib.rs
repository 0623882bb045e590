//! Gaussian-state model of dispersive qubit readout through a two-mode
//! squeezed interferometer, with Monte Carlo records and estimators for SNR,
//! measurement back-action and quantum efficiency.

pub mod backaction;
pub mod device;
pub mod error;
pub mod gaussian;
pub mod interferometer;
pub mod optim;
pub mod readout;

pub use error::{Error, Result};
pub use gaussian::GaussianState;
