//! Closed-form run lengths of the extended CUSUM stopping time.
//!
//! For `u_t = y + a t + b w_t` with occurrences of rate `lambda`, the mean
//! time until `y_t = u_t - m_t` first reaches `nu` is the bounded, twice
//! continuously differentiable solution `f` of
//!
//! ```text
//! a f'(y) + b^2/2 f''(y) + lambda [f(y^+) - f(y)] = -1,   f(nu) = 0,
//! ```
//!
//! namely
//!
//! ```text
//! y >= 0:  f(y) = (1/a) [nu - y + A (exp(-k y) - exp(-k nu))]
//! y <  0:  f(y) = (1/a) [nu + A (1 - exp(-k nu))] + (1 - exp(r y)) / lambda
//! ```
//!
//! with `k = 2a/b^2`, `r = (-a + sqrt(a^2 + 2 lambda b^2)) / b^2` and
//! `A = (b^2 / 2a)(a r / lambda - 1)`. Specializing `a = +-mu^2/2, b = mu`
//! gives the detection delay `g` and the false-alarm period `h`.

use std::io::{self, Write};

use crate::types::{finite, DriftChangeSpec, ParamError, Regime, Threshold};

/// `exp(x) - 1 - x` without cancellation near zero.
pub fn expm1_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // Horner on x^2/2! + x^3/3! + ... + x^12/12!
        let mut term = 1.0 / 479_001_600.0;
        for n in (2..12).rev() {
            term = term * x + 1.0 / factorial(n);
        }
        term * x * x
    } else {
        x.exp_m1() - x
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Exponent rate `r` and amplitude `A` of the run-length function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub r: f64,
    pub amplitude: f64,
}

pub fn rate_constants(a: f64, b: f64, lambda: f64) -> Result<RateConstants, ParamError> {
    let a = finite("a", a)?;
    let b = finite("b", b)?;
    let lambda = finite("lambda", lambda)?;
    if lambda <= 0.0 {
        return Err(ParamError::NonPositiveRate(lambda));
    }
    if b == 0.0 {
        return Err(ParamError::ZeroDiffusion);
    }
    if a == 0.0 {
        return Err(ParamError::ZeroLoglikDrift);
    }
    let b2 = b * b;
    let disc = (a * a + 2.0 * lambda * b2).sqrt();
    // positive root of (b^2/2) r^2 + a r - lambda = 0
    let r = if a > 0.0 {
        2.0 * lambda / (a + disc)
    } else {
        (disc - a) / b2
    };
    // A = (b^2/2a)(a r/lambda - 1) and a r/lambda - 1 = -b^2 r^2 / (2 lambda)
    let amplitude = -b2 * b2 * r * r / (4.0 * a * lambda);
    Ok(RateConstants { r, amplitude })
}

/// Post-change (`r0`, `A0`) and pre-change (`r_inf`, `A_inf`) constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecializedRates {
    pub r0: f64,
    pub r_inf: f64,
    pub a0: f64,
    pub a_inf: f64,
}

pub fn specialized_rates(spec: &DriftChangeSpec) -> Result<SpecializedRates, ParamError> {
    spec.require_positive_rate()?;
    let q = 2.0 * spec.lambda() / (spec.mu() * spec.mu());
    let r_inf = 0.5 + (0.25 + q).sqrt();
    let r0 = q / r_inf;
    Ok(SpecializedRates {
        r0,
        r_inf,
        a0: -r0 / r_inf,
        a_inf: r_inf / r0,
    })
}

/// Which closed-form piece of `f` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `y >= 0`, between occurrences the statistic behaves like CUSUM.
    Upper,
    /// `y < 0`, the next occurrence resets the statistic to zero.
    Lower,
}

impl Branch {
    pub fn of(y: f64) -> Self {
        if y >= 0.0 {
            Branch::Upper
        } else {
            Branch::Lower
        }
    }
}

/// The mean run length `f(y)` for fixed `(a, b, lambda, nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLengthFunction {
    a: f64,
    b: f64,
    lambda: f64,
    nu: f64,
    r: f64,
    amplitude: f64,
    k: f64,
    /// `A k = a r / lambda - 1`
    amp_k: f64,
    /// `f(0)`
    at_zero: f64,
}

impl RunLengthFunction {
    pub fn new(nu: Threshold, a: f64, b: f64, lambda: f64) -> Result<Self, ParamError> {
        let RateConstants { r, amplitude } = rate_constants(a, b, lambda)?;
        let nu = nu.value();
        let b2 = b * b;
        let k = 2.0 * a / b2;
        let amp_k = -b2 * r * r / (2.0 * lambda);
        let at_zero = (nu * (a * r / lambda) - amplitude * expm1_minus_x(-k * nu)) / a;
        Ok(Self {
            a,
            b,
            lambda,
            nu,
            r,
            amplitude,
            k,
            amp_k,
            at_zero,
        })
    }

    pub fn for_regime(nu: Threshold, spec: &DriftChangeSpec, regime: Regime) -> Result<Self, ParamError> {
        spec.require_positive_rate()?;
        let drift = spec.generalized(regime, 0.0)?;
        Self::new(nu, drift.a, drift.b, spec.lambda())
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rates(&self) -> RateConstants {
        RateConstants {
            r: self.r,
            amplitude: self.amplitude,
        }
    }

    fn check(&self, y: f64) -> Result<(), ParamError> {
        finite("y", y)?;
        if y > self.nu {
            Err(ParamError::AboveThreshold { y, nu: self.nu })
        } else {
            Ok(())
        }
    }

    pub fn value(&self, y: f64) -> Result<f64, ParamError> {
        self.check(y)?;
        Ok(self.value_on(Branch::of(y), y))
    }

    pub fn derivative(&self, y: f64) -> Result<f64, ParamError> {
        self.check(y)?;
        Ok(self.derivative_on(Branch::of(y), y))
    }

    pub fn second_derivative(&self, y: f64) -> Result<f64, ParamError> {
        self.check(y)?;
        Ok(self.second_derivative_on(Branch::of(y), y))
    }

    /// Evaluates one branch formula regardless of the sign of `y`; used for
    /// one-sided limits at the branch point.
    pub fn value_on(&self, branch: Branch, y: f64) -> f64 {
        match branch {
            Branch::Upper => {
                // (1/a)[d (1 + A k e^{-ky}) - A e^{-ky} (e^{-kd} - 1 + kd)], d = nu - y
                let d = self.nu - y;
                let e = (-self.k * y).exp();
                (d * (1.0 + self.amp_k * e) - self.amplitude * e * expm1_minus_x(-self.k * d)) / self.a
            }
            Branch::Lower => self.at_zero - (self.r * y).exp_m1() / self.lambda,
        }
    }

    pub fn derivative_on(&self, branch: Branch, y: f64) -> f64 {
        match branch {
            Branch::Upper => (-1.0 - self.amp_k * (-self.k * y).exp()) / self.a,
            Branch::Lower => -(self.r / self.lambda) * (self.r * y).exp(),
        }
    }

    pub fn second_derivative_on(&self, branch: Branch, y: f64) -> f64 {
        match branch {
            Branch::Upper => self.amp_k * self.k * (-self.k * y).exp() / self.a,
            Branch::Lower => -(self.r * self.r / self.lambda) * (self.r * y).exp(),
        }
    }

    /// `a f' + b^2/2 f'' + lambda [f(y^+) - f(y)] + 1`.
    pub fn ode_residual(&self, y: f64) -> Result<f64, ParamError> {
        self.check(y)?;
        let branch = Branch::of(y);
        let jump = self.value_on(Branch::Upper, y.max(0.0)) - self.value_on(branch, y);
        Ok(self.a * self.derivative_on(branch, y)
            + 0.5 * self.b * self.b * self.second_derivative_on(branch, y)
            + self.lambda * jump
            + 1.0)
    }
}

/// Mean run length `f(y)` of the extended CUSUM started at `y`.
pub fn expected_run_length(y: f64, nu: Threshold, a: f64, b: f64, lambda: f64) -> Result<f64, ParamError> {
    RunLengthFunction::new(nu, a, b, lambda)?.value(y)
}

/// `g_nu(y)`: mean detection delay with the change at time 0.
pub fn delay_g(y: f64, nu: Threshold, spec: &DriftChangeSpec) -> Result<f64, ParamError> {
    RunLengthFunction::for_regime(nu, spec, Regime::PostChange)?.value(y)
}

/// `h_nu(y)`: mean time to a false alarm when no change occurs.
pub fn false_alarm_h(y: f64, nu: Threshold, spec: &DriftChangeSpec) -> Result<f64, ParamError> {
    RunLengthFunction::for_regime(nu, spec, Regime::PreChange)?.value(y)
}

/// Residual of the run-length ODE at `y`; zero up to rounding.
pub fn ode_residual(y: f64, nu: Threshold, a: f64, b: f64, lambda: f64) -> Result<f64, ParamError> {
    RunLengthFunction::new(nu, a, b, lambda)?.ode_residual(y)
}

/// Delay / false-alarm pair of a detector at threshold `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub nu: f64,
    pub delay: f64,
    pub false_alarm_period: f64,
    /// `mu^2 delay / 2`
    pub normalized_delay: f64,
    /// `mu^2 false_alarm_period / 2`
    pub normalized_fa: f64,
}

impl OperatingPoint {
    fn from_normalized(nu: f64, mu: f64, normalized_delay: f64, normalized_fa: f64) -> Self {
        let scale = 2.0 / (mu * mu);
        Self {
            nu,
            delay: scale * normalized_delay,
            false_alarm_period: scale * normalized_fa,
            normalized_delay,
            normalized_fa,
        }
    }
}

fn ecusum_normalized_fa(nu: f64, r0: f64) -> f64 {
    expm1_minus_x(nu) + nu.exp_m1() / r0
}

fn ecusum_normalized_delay(nu: f64, r_inf: f64) -> f64 {
    expm1_minus_x(-nu) - (-nu).exp_m1() / r_inf
}

/// `g_nu(0)` and `h_nu(0)` from their dedicated closed forms
/// `(2/mu^2){nu - 1 + e^-nu + (1 - e^-nu)/r_inf}` and
/// `(2/mu^2){e^nu - nu - 1 + (e^nu - 1)/r0}`.
pub fn ecusum_operating_point(nu: Threshold, spec: &DriftChangeSpec) -> Result<OperatingPoint, ParamError> {
    let rates = specialized_rates(spec)?;
    let nu = nu.value();
    Ok(OperatingPoint::from_normalized(
        nu,
        spec.mu(),
        ecusum_normalized_delay(nu, rates.r_inf),
        ecusum_normalized_fa(nu, rates.r0),
    ))
}

/// Classical CUSUM operating point, the `lambda -> infinity` limit.
pub fn cusum_operating_point(nu: Threshold, mu: f64) -> Result<OperatingPoint, ParamError> {
    let mu = finite("mu", mu)?;
    if mu == 0.0 {
        return Err(ParamError::ZeroDrift);
    }
    let nu = nu.value();
    Ok(OperatingPoint::from_normalized(
        nu,
        mu,
        expm1_minus_x(-nu),
        expm1_minus_x(nu),
    ))
}

const BISECTION_WIDTH: f64 = 1e-13;
const BISECTION_RESIDUAL: f64 = 1e-11;

/// Root of `f(nu) = target` for `f` continuous, strictly increasing with
/// `f(0) = 0`. Brackets by doubling from `[0, 1]`.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, target: f64) -> Result<f64, ParamError> {
    let target = finite("gamma", target)?;
    if target < 0.0 {
        return Err(ParamError::NegativeGamma(target));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e6 {
            return Err(ParamError::NonFinite { name: "nu", value: hi });
        }
    }
    let mut best = (f64::INFINITY, hi);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        let residual = (fm - target).abs();
        if residual < best.0 {
            best = (residual, mid);
        }
        if residual <= BISECTION_RESIDUAL || hi - lo <= BISECTION_WIDTH || mid <= lo || mid >= hi {
            break;
        }
        if fm < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

/// Threshold `nu*` with `h_{nu*}(0) = gamma`.
pub fn calibrate_threshold(gamma: f64, spec: &DriftChangeSpec) -> Result<Threshold, ParamError> {
    let rates = specialized_rates(spec)?;
    let scale = 2.0 / (spec.mu() * spec.mu());
    let nu = bisect_increasing(|nu| scale * ecusum_normalized_fa(nu, rates.r0), gamma)?;
    Threshold::new(nu)
}

/// Classical CUSUM threshold with `(2/mu^2)(e^nu - nu - 1) = gamma`.
pub fn calibrate_cusum_threshold(gamma: f64, mu: f64) -> Result<Threshold, ParamError> {
    let mu = finite("mu", mu)?;
    if mu == 0.0 {
        return Err(ParamError::ZeroDrift);
    }
    let scale = 2.0 / (mu * mu);
    let nu = bisect_increasing(|nu| scale * expm1_minus_x(nu), gamma)?;
    Threshold::new(nu)
}

/// `p(y) = e^y g(y) - (r0/r_inf) h(y)` at threshold `nu`; nonpositive with
/// its maximum `p(nu) = 0`.
pub fn optimality_potential(y: f64, nu: Threshold, spec: &DriftChangeSpec) -> Result<f64, ParamError> {
    let rates = specialized_rates(spec)?;
    let g = RunLengthFunction::for_regime(nu, spec, Regime::PostChange)?;
    let h = RunLengthFunction::for_regime(nu, spec, Regime::PreChange)?;
    Ok(y.exp() * g.value(y)? - rates.r0 / rates.r_inf * h.value(y)?)
}

/// One point of the normalized delay versus false-alarm curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub ratio: f64,
    pub gamma_norm: f64,
    pub ecusum_delay_norm: f64,
    pub cusum_delay_norm: f64,
}

pub const CURVE_CSV_HEADER: &str = "ratio,gamma_norm,ecusum_delay_norm,cusum_delay_norm";

/// ECUSUM and CUSUM normalized delays at equal normalized false-alarm
/// period `mu^2 gamma / 2`, one row per `(ratio, gamma)` pair, ratio-major.
pub fn curve_table(ratios: &[f64], gamma_grid: &[f64]) -> Result<Vec<CurveRow>, ParamError> {
    if ratios.is_empty() {
        return Err(ParamError::EmptyGrid("ratio"));
    }
    if gamma_grid.is_empty() {
        return Err(ParamError::EmptyGrid("gamma"));
    }
    let mut rows = Vec::with_capacity(ratios.len() * gamma_grid.len());
    for &ratio in ratios {
        let ratio = finite("ratio", ratio)?;
        if ratio <= 0.0 {
            return Err(ParamError::NonPositiveRatio(ratio));
        }
        // normalized quantities only depend on mu^2/lambda
        let spec = DriftChangeSpec::new(1.0, 1.0 / ratio)?;
        for &gamma_norm in gamma_grid {
            let gamma = 2.0 * finite("gamma", gamma_norm)?;
            let ecusum = ecusum_operating_point(calibrate_threshold(gamma, &spec)?, &spec)?;
            let cusum = cusum_operating_point(calibrate_cusum_threshold(gamma, 1.0)?, 1.0)?;
            rows.push(CurveRow {
                ratio,
                gamma_norm,
                ecusum_delay_norm: ecusum.normalized_delay,
                cusum_delay_norm: cusum.normalized_delay,
            });
        }
    }
    Ok(rows)
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.ratio, row.gamma_norm, row.ecusum_delay_norm, row.cusum_delay_norm
        )?;
    }
    Ok(())
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (l0, l1) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}
