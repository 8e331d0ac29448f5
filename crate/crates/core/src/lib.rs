//! Extended CUSUM (ECUSUM) detection of a drift change in Brownian motion
//! when the change can only be triggered at observable Poisson occurrences.
//!
//! - [`analytic`]: closed-form run lengths, operating points, calibration.
//! - [`simulate`]: path-level Monte Carlo of the detector state machines.
//! - [`framework`]: exact randomized change-time measures on finite models.
//! - [`stream`]: online detection over recorded or live increment streams.

pub mod analytic;
pub mod framework;
pub mod simulate;
pub mod stream;
pub mod types;

pub use types::{
    loglik_drift, loglik_increment, DriftChangeSpec, GeneralizedDrift, ParamError, Regime, RunLengthEstimate, Threshold,
};
