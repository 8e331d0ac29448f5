//! Shared model vocabulary: drift-change parameters, regimes, thresholds and
//! run-length records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parameter validation failures shared by the analytic and simulation code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("drift mu must be nonzero (no detectable change at mu = 0)")]
    ZeroDrift,
    #[error("occurrence rate lambda must be > 0, got {0}")]
    NonPositiveRate(f64),
    #[error("occurrence rate lambda must be >= 0, got {0}")]
    NegativeRate(f64),
    #[error("diffusion coefficient b must be nonzero")]
    ZeroDiffusion,
    #[error("log-likelihood drift a must be nonzero")]
    ZeroLoglikDrift,
    #[error("threshold nu must be >= 0, got {0}")]
    NegativeThreshold(f64),
    #[error("starting value y = {y} lies above the threshold nu = {nu}")]
    AboveThreshold { y: f64, nu: f64 },
    #[error("false-alarm target gamma must be >= 0, got {0}")]
    NegativeGamma(f64),
    #[error("ratio mu^2/lambda must be > 0, got {0}")]
    NonPositiveRatio(f64),
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
}

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ParamError::NonFinite { name, value })
    }
}

/// Brownian observation model `xi_t = mu (t - tau)^+ + w_t` with change
/// allowed only at Poisson occurrences of rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftChangeSpec {
    mu: f64,
    lambda: f64,
}

impl DriftChangeSpec {
    /// Accepts `lambda >= 0`; closed-form routines additionally require
    /// `lambda > 0` and check it via [`DriftChangeSpec::require_positive_rate`].
    pub fn new(mu: f64, lambda: f64) -> Result<Self, ParamError> {
        let mu = finite("mu", mu)?;
        let lambda = finite("lambda", lambda)?;
        if mu == 0.0 {
            return Err(ParamError::ZeroDrift);
        }
        if lambda < 0.0 {
            return Err(ParamError::NegativeRate(lambda));
        }
        Ok(Self { mu, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn require_positive_rate(&self) -> Result<(), ParamError> {
        if self.lambda > 0.0 {
            Ok(())
        } else {
            Err(ParamError::NonPositiveRate(self.lambda))
        }
    }

    /// `mu^2 / lambda`, the single shape parameter of the normalized curves.
    pub fn ratio(&self) -> f64 {
        self.mu * self.mu / self.lambda
    }

    /// Drift and diffusion of the log-likelihood ratio under `regime`.
    pub fn generalized(&self, regime: Regime, y0: f64) -> Result<GeneralizedDrift, ParamError> {
        GeneralizedDrift::new(loglik_drift(regime, self.mu)?, self.mu, y0)
    }
}

/// Which measure generates the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// No change ever happens (`P_inf`).
    PreChange,
    /// The change happened at time 0 (`P_0`).
    PostChange,
}

impl Regime {
    /// Drift of the observation process `xi` itself.
    pub fn observation_drift(self, mu: f64) -> f64 {
        match self {
            Regime::PreChange => 0.0,
            Regime::PostChange => mu,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::PreChange => "pre",
            Regime::PostChange => "post",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pre" | "prechange" | "pre-change" | "inf" => Ok(Regime::PreChange),
            "post" | "postchange" | "post-change" | "0" => Ok(Regime::PostChange),
            other => Err(format!("unknown regime '{other}' (expected 'pre' or 'post')")),
        }
    }
}

/// Stopping level for the detection statistic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(nu: f64) -> Result<Self, ParamError> {
        let nu = finite("nu", nu)?;
        if nu < 0.0 {
            return Err(ParamError::NegativeThreshold(nu));
        }
        Ok(Self(nu))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub(crate) fn check_start(self, y: f64) -> Result<(), ParamError> {
        finite("y", y)?;
        if y > self.0 {
            Err(ParamError::AboveThreshold { y, nu: self.0 })
        } else {
            Ok(())
        }
    }
}

/// `u_t = y0 + a t + b w_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedDrift {
    pub a: f64,
    pub b: f64,
    pub y0: f64,
}

impl GeneralizedDrift {
    pub fn new(a: f64, b: f64, y0: f64) -> Result<Self, ParamError> {
        let a = finite("a", a)?;
        let b = finite("b", b)?;
        let y0 = finite("y0", y0)?;
        if b == 0.0 {
            return Err(ParamError::ZeroDiffusion);
        }
        Ok(Self { a, b, y0 })
    }
}

/// Monte Carlo run-length estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLengthEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub dt: f64,
    /// Paths that hit the truncation horizon before stopping.
    pub n_truncated: usize,
}

/// Drift of `u_t = -mu^2 t / 2 + mu xi_t` under `regime`; the diffusion
/// coefficient is always `mu`.
pub fn loglik_drift(regime: Regime, mu: f64) -> Result<f64, ParamError> {
    let mu = finite("mu", mu)?;
    if mu == 0.0 {
        return Err(ParamError::ZeroDrift);
    }
    let half = 0.5 * mu * mu;
    Ok(match regime {
        Regime::PreChange => -half,
        Regime::PostChange => half,
    })
}

/// Log-likelihood increment over an interval of length `elapsed` in which
/// the observation process moved by `dxi`.
#[inline]
pub fn loglik_increment(mu: f64, elapsed: f64, dxi: f64) -> f64 {
    -0.5 * mu * mu * elapsed + mu * dxi
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loglik_drift_examples() {
        assert_eq!(loglik_drift(Regime::PostChange, 1.0).unwrap(), 0.5);
        assert_eq!(loglik_drift(Regime::PreChange, 1.0).unwrap(), -0.5);
        assert_eq!(loglik_drift(Regime::PostChange, 2.0).unwrap(), 2.0);
        assert_eq!(loglik_drift(Regime::PostChange, 0.0), Err(ParamError::ZeroDrift));
    }

    #[test]
    fn spec_rejects_bad_parameters() {
        assert_eq!(DriftChangeSpec::new(0.0, 1.0), Err(ParamError::ZeroDrift));
        assert!(DriftChangeSpec::new(1.0, -1.0).is_err());
        assert!(DriftChangeSpec::new(f64::NAN, 1.0).is_err());
        let zero_rate = DriftChangeSpec::new(1.0, 0.0).unwrap();
        assert!(zero_rate.require_positive_rate().is_err());
        assert!(Threshold::new(-0.1).is_err());
        assert!(GeneralizedDrift::new(0.5, 0.0, 0.0).is_err());
        // negative mu is a valid model
        let neg = DriftChangeSpec::new(-2.0, 1.0).unwrap();
        assert_eq!(neg.generalized(Regime::PostChange, 0.0).unwrap().a, 2.0);
    }

    #[test]
    fn regime_parses() {
        assert_eq!("post".parse::<Regime>().unwrap(), Regime::PostChange);
        assert_eq!("PRE".parse::<Regime>().unwrap(), Regime::PreChange);
        assert!("sideways".parse::<Regime>().is_err());
    }

    #[test]
    fn increment_matches_drift_under_each_regime() {
        // Noise-free increment dxi = drift * dt recovers a * dt.
        for &mu in &[0.5, 1.0, -3.0] {
            for regime in [Regime::PreChange, Regime::PostChange] {
                let dt = 0.25;
                let du = loglik_increment(mu, dt, regime.observation_drift(mu) * dt);
                let a = loglik_drift(regime, mu).unwrap();
                assert!((du - a * dt).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn drifts_are_antisymmetric(mu in prop_oneof![-50.0..-1e-3f64, 1e-3..50.0f64]) {
            let post = loglik_drift(Regime::PostChange, mu).unwrap();
            let pre = loglik_drift(Regime::PreChange, mu).unwrap();
            prop_assert_eq!(post, -pre);
            prop_assert!(post > 0.0);
        }
    }
}
