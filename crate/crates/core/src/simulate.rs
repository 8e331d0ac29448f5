//! Path-level Monte Carlo of the ECUSUM and CUSUM detectors.
//!
//! Each path draws its observation increments by Euler steps on a fixed
//! grid of width `dt`; Poisson occurrences are placed at their exact
//! exponential arrival times by splitting the step, so resets happen at the
//! true arrival instant. Path `i` uses its own ChaCha stream (stream id `i`
//! under the master seed), which makes every estimate independent of how
//! paths are spread over worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::RunLengthFunction;
use crate::stream::StreamRecord;
use crate::types::{finite, loglik_increment, DriftChangeSpec, ParamError, Regime, RunLengthEstimate, Threshold};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error("{truncated} of {n_paths} paths reached the truncation horizon (limit {limit})")]
    TruncationExceeded {
        truncated: usize,
        n_paths: usize,
        limit: f64,
    },
}

/// Detector statistic between observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcusumState {
    /// `u_t - m_t`
    pub y: f64,
    pub stopped: bool,
    pub elapsed: f64,
}

impl EcusumState {
    pub fn new(y0: f64) -> Self {
        Self {
            y: y0,
            stopped: false,
            elapsed: 0.0,
        }
    }
}

/// Continuous move by `du` over `dt`, then the reset `y = max(y, 0)` when an
/// occurrence lands at the end of the interval.
#[inline]
pub fn step_ecusum(state: EcusumState, dt: f64, du: f64, occurrence: bool, nu: Threshold) -> EcusumState {
    debug_assert!(!state.stopped);
    let mut y = state.y + du;
    if occurrence {
        y = y.max(0.0);
    }
    EcusumState {
        y,
        stopped: y >= nu.value(),
        elapsed: state.elapsed + dt,
    }
}

/// Classical CUSUM: every instant acts as an occurrence.
#[inline]
pub fn step_cusum(state: EcusumState, dt: f64, du: f64, nu: Threshold) -> EcusumState {
    step_ecusum(state, dt, du, true, nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Ecusum,
    Cusum,
}

impl Variant {
    #[inline]
    pub fn step(self, state: EcusumState, dt: f64, du: f64, occurrence: bool, nu: Threshold) -> EcusumState {
        match self {
            Variant::Ecusum => step_ecusum(state, dt, du, occurrence, nu),
            Variant::Cusum => step_cusum(state, dt, du, nu),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ecusum => "ecusum",
            Variant::Cusum => "cusum",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ecusum" => Ok(Variant::Ecusum),
            "cusum" => Ok(Variant::Cusum),
            other => Err(format!("unknown variant '{other}' (expected 'ecusum' or 'cusum')")),
        }
    }
}

/// Default step: `min(1e-3, 0.01 * 2/mu^2)`.
pub fn default_dt(mu: f64) -> f64 {
    1e-3_f64.min(0.02 / (mu * mu))
}

pub const DEFAULT_MAX_TIME: f64 = 1e4;
pub const DEFAULT_MAX_TRUNCATED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Paths still running at this time are cut and counted as truncated.
    pub max_time: f64,
    /// Brownian-bridge test for threshold crossings between grid points.
    pub bridge_correction: bool,
    pub max_truncated_fraction: f64,
}

impl SimConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            n_paths,
            seed,
            max_time: DEFAULT_MAX_TIME,
            bridge_correction: false,
            max_truncated_fraction: DEFAULT_MAX_TRUNCATED_FRACTION,
        }
    }

    /// Default step for `spec` and a horizon of 50 analytic means (or
    /// [`DEFAULT_MAX_TIME`] when no closed form exists, e.g. `lambda = 0`).
    pub fn for_model(
        spec: &DriftChangeSpec,
        regime: Regime,
        nu: Threshold,
        y0: f64,
        n_paths: usize,
        seed: u64,
    ) -> Self {
        let mut cfg = Self::new(default_dt(spec.mu()), n_paths, seed);
        if let Some(mean) = analytic_mean(spec, regime, nu, y0) {
            if mean > 0.0 {
                cfg.max_time = 50.0 * mean;
            }
        }
        cfg
    }

    pub fn with_bridge(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }

    pub fn with_max_time(mut self, max_time: f64) -> Self {
        self.max_time = max_time;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig("dt must be > 0"));
        }
        if self.max_time.is_nan() || self.max_time <= 0.0 {
            return Err(SimError::InvalidConfig("max_time must be > 0"));
        }
        if self.n_paths == 0 {
            return Err(SimError::InvalidConfig("n_paths must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.max_truncated_fraction) {
            return Err(SimError::InvalidConfig("max_truncated_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Closed-form mean run length, when the model admits one.
pub fn analytic_mean(spec: &DriftChangeSpec, regime: Regime, nu: Threshold, y0: f64) -> Option<f64> {
    RunLengthFunction::for_regime(nu, spec, regime)
        .and_then(|f| f.value(y0))
        .ok()
}

/// How a single simulated path ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub time: f64,
    /// Statistic at `time`.
    pub y: f64,
    pub crossed: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy)]
struct PathModel {
    mu: f64,
    drift_xi: f64,
    arrivals: Option<Exp<f64>>,
    nu: Threshold,
    y0: f64,
    variant: Variant,
    dt: f64,
    seed: u64,
    max_time: f64,
    bridge: bool,
}

impl PathModel {
    fn new(
        regime: Regime,
        spec: &DriftChangeSpec,
        nu: Threshold,
        y0: f64,
        variant: Variant,
        cfg: &SimConfig,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        nu.check_start(y0)?;
        let arrivals = if spec.lambda() > 0.0 {
            Some(Exp::new(spec.lambda()).map_err(|_| ParamError::NonPositiveRate(spec.lambda()))?)
        } else {
            None
        };
        Ok(Self {
            mu: spec.mu(),
            drift_xi: regime.observation_drift(spec.mu()),
            arrivals,
            nu,
            y0,
            variant,
            dt: cfg.dt,
            seed: cfg.seed,
            max_time: cfg.max_time,
            bridge: cfg.bridge_correction,
        })
    }

    fn rng(&self, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index);
        rng
    }

    /// Runs one path until the statistic reaches `nu`, `horizon` elapses, or
    /// the truncation time is hit. Records `(t, dxi, occ)` per step when asked.
    fn run(&self, path_index: u64, horizon: Option<f64>, mut recorder: Option<&mut Vec<StreamRecord>>) -> PathOutcome {
        let nu = self.nu.value();
        if self.y0 >= nu {
            return PathOutcome {
                time: 0.0,
                y: self.y0,
                crossed: true,
                truncated: false,
            };
        }
        let stop_at = horizon.map_or(self.max_time, |h| h.min(self.max_time));
        let diffusion2 = self.mu * self.mu;
        let mut rng = self.rng(path_index);
        let mut next_arrival = match &self.arrivals {
            Some(exp) => exp.sample(&mut rng),
            None => f64::INFINITY,
        };
        let mut state = EcusumState::new(self.y0);
        let mut t = 0.0_f64;
        let mut k: u64 = 0;

        while t < stop_at {
            let grid = (k + 1) as f64 * self.dt;
            let t_next = grid.min(next_arrival).min(stop_at);
            let occ = next_arrival <= t_next;
            if grid <= t_next {
                k += 1;
            }
            if occ {
                next_arrival += match &self.arrivals {
                    Some(exp) => exp.sample(&mut rng),
                    None => f64::INFINITY,
                };
            }
            let h = t_next - t;
            if h <= 0.0 {
                // coincident arrival: the reset is idempotent, fold it into the last record
                if occ {
                    state.y = state.y.max(0.0);
                    if let Some(last) = recorder.as_deref_mut().and_then(|r| r.last_mut()) {
                        last.occ = true;
                    }
                }
                continue;
            }
            let z: f64 = rng.sample(StandardNormal);
            let dxi = self.drift_xi * h + h.sqrt() * z;
            let du = loglik_increment(self.mu, h, dxi);
            let y_start = state.y;
            let y_end = y_start + du;
            let mut bridged = false;
            if self.bridge && y_end < nu {
                let exponent = -2.0 * (nu - y_start) * (nu - y_end) / (diffusion2 * h);
                if exponent > -50.0 {
                    let u: f64 = rng.random();
                    bridged = u < exponent.exp();
                }
            }
            state = self.variant.step(state, h, du, occ, self.nu);
            if let Some(rec) = recorder.as_deref_mut() {
                rec.push(StreamRecord { t: t_next, dxi, occ });
            }
            t = t_next;
            if state.stopped || bridged {
                return PathOutcome {
                    time: t,
                    y: state.y,
                    crossed: true,
                    truncated: false,
                };
            }
        }
        PathOutcome {
            time: t,
            y: state.y,
            crossed: false,
            truncated: horizon.is_none_or(|h| h > self.max_time),
        }
    }
}

/// One path of the ECUSUM started at `y0`.
pub fn simulate_path(
    regime: Regime,
    spec: &DriftChangeSpec,
    nu: Threshold,
    y0: f64,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<PathOutcome, SimError> {
    Ok(PathModel::new(regime, spec, nu, y0, Variant::Ecusum, cfg)?.run(path_index, None, None))
}

/// Like [`simulate_path`] with `y0 = 0`, also returning the observation
/// stream `(t, dxi, occ)` the detector saw, one record per step.
pub fn record_path(
    regime: Regime,
    spec: &DriftChangeSpec,
    nu: Threshold,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<(PathOutcome, Vec<StreamRecord>), SimError> {
    record_path_from(regime, spec, nu, 0.0, cfg, path_index)
}

pub fn record_path_from(
    regime: Regime,
    spec: &DriftChangeSpec,
    nu: Threshold,
    y0: f64,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<(PathOutcome, Vec<StreamRecord>), SimError> {
    let model = PathModel::new(regime, spec, nu, y0, Variant::Ecusum, cfg)?;
    let mut records = Vec::new();
    let outcome = model.run(path_index, None, Some(&mut records));
    Ok((outcome, records))
}

/// Stopping times of `cfg.n_paths` independent paths, in path order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLengthSample {
    pub times: Vec<f64>,
    pub n_truncated: usize,
    pub dt: f64,
}

impl RunLengthSample {
    pub fn estimate(&self) -> RunLengthEstimate {
        let (mean, stderr) = mean_and_stderr(&self.times);
        RunLengthEstimate {
            mean,
            stderr,
            n_paths: self.times.len(),
            dt: self.dt,
            n_truncated: self.n_truncated,
        }
    }
}

fn run_all(model: &PathModel, n_paths: usize, horizon: Option<f64>) -> Vec<PathOutcome> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| model.run(i, horizon, None))
        .collect()
}

fn check_truncation(outcomes: &[PathOutcome], limit: f64) -> Result<usize, SimError> {
    let truncated = outcomes.iter().filter(|o| o.truncated).count();
    if truncated as f64 > limit * outcomes.len() as f64 {
        return Err(SimError::TruncationExceeded {
            truncated,
            n_paths: outcomes.len(),
            limit,
        });
    }
    Ok(truncated)
}

/// Samples the stopping time of the detector started at `y0`.
pub fn simulate_run_length(
    regime: Regime,
    spec: &DriftChangeSpec,
    nu: Threshold,
    y0: f64,
    cfg: &SimConfig,
) -> Result<RunLengthSample, SimError> {
    simulate_run_length_variant(regime, spec, nu, y0, Variant::Ecusum, cfg)
}

pub fn simulate_run_length_variant(
    regime: Regime,
    spec: &DriftChangeSpec,
    nu: Threshold,
    y0: f64,
    variant: Variant,
    cfg: &SimConfig,
) -> Result<RunLengthSample, SimError> {
    let model = PathModel::new(regime, spec, nu, y0, variant, cfg)?;
    let outcomes = run_all(&model, cfg.n_paths, None);
    let n_truncated = check_truncation(&outcomes, cfg.max_truncated_fraction)?;
    Ok(RunLengthSample {
        times: outcomes.iter().map(|o| o.time).collect(),
        n_truncated,
        dt: cfg.dt,
    })
}

/// Mean run length with its standard error.
pub fn monte_carlo_run_length(
    regime: Regime,
    spec: &DriftChangeSpec,
    nu: Threshold,
    y0: f64,
    cfg: &SimConfig,
) -> Result<RunLengthEstimate, SimError> {
    if cfg.n_paths < 2 {
        return Err(SimError::InvalidConfig("n_paths must be >= 2 for a standard error"));
    }
    Ok(simulate_run_length(regime, spec, nu, y0, cfg)?.estimate())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let (mean, stderr) = mean_and_stderr(samples);
        Self {
            mean,
            stderr,
            n: samples.len(),
        }
    }
}

/// Ordered reduction; `stderr = sample std / sqrt(n)`, zero for `n < 2`.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

fn stopped_at_horizon(
    horizon: f64,
    spec: &DriftChangeSpec,
    nu: Threshold,
    cfg: &SimConfig,
) -> Result<Vec<PathOutcome>, SimError> {
    let horizon = finite("horizon", horizon)?;
    if horizon <= 0.0 {
        return Err(SimError::InvalidConfig("horizon must be > 0"));
    }
    let model = PathModel::new(Regime::PreChange, spec, nu, 0.0, Variant::Ecusum, cfg)?;
    let outcomes = run_all(&model, cfg.n_paths, Some(horizon));
    check_truncation(&outcomes, cfg.max_truncated_fraction)?;
    Ok(outcomes)
}

/// `E_inf[exp(y)]` at `min(horizon, S_nu)` for the detector started at 0;
/// never below one.
pub fn estimate_exp_moment_at_stop(
    horizon: f64,
    spec: &DriftChangeSpec,
    nu: Threshold,
    cfg: &SimConfig,
) -> Result<MeanEstimate, SimError> {
    let outcomes = stopped_at_horizon(horizon, spec, nu, cfg)?;
    let values: Vec<f64> = outcomes.iter().map(|o| o.y.exp()).collect();
    Ok(MeanEstimate::from_samples(&values))
}

/// `E_inf[min(horizon, S_nu)]`, nondecreasing in `nu`.
pub fn estimate_truncated_false_alarm(
    horizon: f64,
    spec: &DriftChangeSpec,
    nu: Threshold,
    cfg: &SimConfig,
) -> Result<MeanEstimate, SimError> {
    let outcomes = stopped_at_horizon(horizon, spec, nu, cfg)?;
    let values: Vec<f64> = outcomes.iter().map(|o| o.time).collect();
    Ok(MeanEstimate::from_samples(&values))
}

pub const SIM_CSV_HEADER: &str = "regime,mu,lambda,nu,y0,dt,n_paths,seed,mean,stderr,truncated";

/// One Monte Carlo run together with the parameters that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationReport {
    pub regime: Regime,
    pub mu: f64,
    pub lambda: f64,
    pub nu: f64,
    pub y0: f64,
    pub seed: u64,
    pub estimate: RunLengthEstimate,
}

impl SimulationReport {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.regime,
            self.mu,
            self.lambda,
            self.nu,
            self.y0,
            self.estimate.dt,
            self.estimate.n_paths,
            self.seed,
            self.estimate.mean,
            self.estimate.stderr,
            self.estimate.n_truncated
        )
    }
}
