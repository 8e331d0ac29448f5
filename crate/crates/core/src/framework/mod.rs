//! Exact performance measures for a randomized change time on finite,
//! discrete-time models.
//!
//! Observations `x_1, ..., x_H` take values in a finite alphabet and are
//! i.i.d. `pre_dist` up to and including the change time `tau` and i.i.d.
//! `post_dist` afterwards (`tau = t` means `x_1..x_t` are pre-change). The
//! change time is randomized through `pi_t = varpi_t p_t`, where `varpi_t`
//! is a deterministic probability sequence and `p_t` a nonnegative function
//! of the history `x_1..x_t` with unit mean under the pre-change measure.
//!
//! Everything here is computed by exhaustive enumeration of histories, so
//! models are capped at [`MAX_PATHS`] full paths. Histories are indexed by
//! their base-`k` code, most significant symbol first.

pub mod document;

use thiserror::Error;

/// Largest admissible `|alphabet|^horizon`.
pub const MAX_PATHS: usize = 1 << 20;

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameworkError {
    #[error("alphabet must contain at least one symbol")]
    EmptyAlphabet,
    #[error("duplicate symbol '{0}' in alphabet")]
    DuplicateSymbol(String),
    #[error("horizon must be >= 1")]
    ZeroHorizon,
    #[error("model has |alphabet|^horizon = {0} paths, more than the enumeration limit 2^20")]
    ModelTooLarge(String),
    #[error("{which} must be a probability vector over the alphabet: {reason}")]
    InvalidDistribution { which: &'static str, reason: String },
    #[error("prior weights varpi must have horizon + 1 = {expected} entries, found {found}")]
    PriorLength { expected: usize, found: usize },
    #[error("prior weights varpi must be nonnegative and finite (entry {0})")]
    NegativeWeight(usize),
    #[error("prior weights varpi must sum to 1 (sum = {0})")]
    PriorNotNormalized(f64),
    #[error("trigger p_{t} must be a nonnegative table over the {expected} histories of length {t}")]
    TriggerShape { t: usize, expected: usize },
    #[error("trigger p_{t} must have unit mean under the pre-change measure (mean = {mean})")]
    TriggerNotNormalized { t: usize, mean: f64 },
    #[error("history has zero probability under the pre-change measure")]
    NullHistory,
    #[error("time {t} lies outside 0..={horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("set of admissible change times is empty")]
    EmptyTimes,
    #[error("unknown symbol '{0}'")]
    UnknownSymbol(String),
    #[error("integrand must be nonnegative and finite, got {value} at t = {t}")]
    NegativeIntegrand { t: usize, value: f64 },
    #[error("undefined measure: {0}")]
    UndefinedMeasure(&'static str),
    #[error("supremum is infinite: b[{0}] = 0 < a[{0}]")]
    InfiniteSupremum(usize),
    #[error("sequences must be nonempty, finite, nonnegative and of equal length")]
    InvalidSequences,
    #[error("{0}")]
    Document(String),
}

/// Finite-horizon, finite-alphabet i.i.d. pre/post-change model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChangeModel {
    horizon: usize,
    alphabet: Vec<String>,
    pre_dist: Vec<f64>,
    post_dist: Vec<f64>,
    /// `k^t` for `t = 0..=horizon`
    sizes: Vec<usize>,
}

fn check_distribution(which: &'static str, dist: &[f64], k: usize) -> Result<(), FrameworkError> {
    let invalid = |reason: String| FrameworkError::InvalidDistribution { which, reason };
    if dist.len() != k {
        return Err(invalid(format!("expected {k} entries, found {}", dist.len())));
    }
    if let Some(p) = dist.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(invalid(format!("entry {p} is not a nonnegative number")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(invalid(format!("entries sum to {sum}, not 1")));
    }
    Ok(())
}

impl DiscreteChangeModel {
    pub fn new(
        horizon: usize,
        alphabet: Vec<String>,
        pre_dist: Vec<f64>,
        post_dist: Vec<f64>,
    ) -> Result<Self, FrameworkError> {
        let k = alphabet.len();
        if k == 0 {
            return Err(FrameworkError::EmptyAlphabet);
        }
        for (i, s) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(s) {
                return Err(FrameworkError::DuplicateSymbol(s.clone()));
            }
        }
        if horizon == 0 {
            return Err(FrameworkError::ZeroHorizon);
        }
        let mut sizes = Vec::with_capacity(horizon + 1);
        let mut n: usize = 1;
        sizes.push(n);
        for _ in 0..horizon {
            n = n
                .checked_mul(k)
                .filter(|&n| n <= MAX_PATHS)
                .ok_or_else(|| FrameworkError::ModelTooLarge(format!("{k}^{horizon}")))?;
            sizes.push(n);
        }
        check_distribution("pre_dist", &pre_dist, k)?;
        check_distribution("post_dist", &post_dist, k)?;
        Ok(Self {
            horizon,
            alphabet,
            pre_dist,
            post_dist,
            sizes,
        })
    }

    /// Binary model with `P(x = 1)` equal to `q_pre` before and `q_post`
    /// after the change.
    pub fn bernoulli(horizon: usize, q_pre: f64, q_post: f64) -> Result<Self, FrameworkError> {
        Self::new(
            horizon,
            vec!["0".into(), "1".into()],
            vec![1.0 - q_pre, q_pre],
            vec![1.0 - q_post, q_post],
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn pre_dist(&self) -> &[f64] {
        &self.pre_dist
    }

    pub fn post_dist(&self) -> &[f64] {
        &self.post_dist
    }

    pub fn symbols(&self) -> usize {
        self.alphabet.len()
    }

    /// Number of histories of length `t`.
    pub fn histories(&self, t: usize) -> usize {
        self.sizes[t]
    }

    pub fn symbol_index(&self, name: &str) -> Result<usize, FrameworkError> {
        self.alphabet
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| FrameworkError::UnknownSymbol(name.to_string()))
    }

    pub fn encode(&self, prefix: &[usize]) -> usize {
        prefix.iter().fold(0, |code, &x| code * self.symbols() + x)
    }

    pub fn decode(&self, code: usize, len: usize) -> Vec<usize> {
        let k = self.symbols();
        let mut out = vec![0; len];
        let mut c = code;
        for slot in out.iter_mut().rev() {
            *slot = c % k;
            c /= k;
        }
        out
    }

    pub fn render(&self, prefix: &[usize]) -> String {
        prefix
            .iter()
            .map(|&x| self.alphabet[x].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// `P_inf(x_1..x_t)` for every history of every length.
    fn pre_prefix_probs(&self) -> Vec<Vec<f64>> {
        let k = self.symbols();
        let mut out = vec![vec![1.0]];
        for t in 1..=self.horizon {
            let prev = &out[t - 1];
            let layer = (0..self.sizes[t]).map(|c| prev[c / k] * self.pre_dist[c % k]).collect();
            out.push(layer);
        }
        out
    }

    pub fn pre_probability(&self, prefix: &[usize]) -> f64 {
        prefix.iter().map(|&x| self.pre_dist[x]).product()
    }
}

/// Stopping time on the histories of a [`DiscreteChangeModel`], forced to
/// stop at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    k: usize,
    horizon: usize,
    /// `stopped[t][code]` is `T <= t` for the history `code` of length `t`.
    stopped: Vec<Vec<bool>>,
    /// Length-`H` histories on which the rule had not stopped by itself.
    forced: Vec<bool>,
}

impl StoppingRule {
    /// `decide(prefix)` is consulted only for prefixes whose own prefixes
    /// all continued.
    pub fn from_fn(model: &DiscreteChangeModel, mut decide: impl FnMut(&[usize]) -> bool) -> Self {
        let k = model.symbols();
        let horizon = model.horizon();
        let mut stopped: Vec<Vec<bool>> = Vec::with_capacity(horizon + 1);
        stopped.push(vec![decide(&[])]);
        let mut forced = Vec::new();
        for t in 1..=horizon {
            let layer: Vec<bool> = (0..model.histories(t))
                .map(|c| stopped[t - 1][c / k] || decide(&model.decode(c, t)))
                .collect();
            if t == horizon {
                forced = layer.iter().map(|s| !s).collect();
                stopped.push(vec![true; layer.len()]);
            } else {
                stopped.push(layer);
            }
        }
        Self {
            k,
            horizon,
            stopped,
            forced,
        }
    }

    /// Stops at `min(n, H)` regardless of the data.
    pub fn fixed_time(model: &DiscreteChangeModel, n: usize) -> Self {
        Self::from_fn(model, |prefix| prefix.len() >= n)
    }

    /// Stops once the CUSUM of per-symbol log-likelihood ratios
    /// `ln(post/pre)` reaches `c`.
    pub fn threshold_on_likelihood_ratio(model: &DiscreteChangeModel, c: f64) -> Self {
        let llr: Vec<f64> = model
            .pre_dist()
            .iter()
            .zip(model.post_dist())
            .map(|(p, q)| (q / p).ln())
            .collect();
        Self::from_fn(model, |prefix| {
            if prefix.is_empty() {
                return c <= 0.0;
            }
            let w = prefix.iter().fold(0.0_f64, |w, &x| (w + llr[x]).max(0.0));
            w >= c
        })
    }

    /// Stops on exactly the listed prefixes (and their extensions).
    pub fn from_table(model: &DiscreteChangeModel, stop: &[Vec<usize>]) -> Self {
        let codes: std::collections::HashSet<(usize, usize)> =
            stop.iter().map(|p| (p.len(), model.encode(p))).collect();
        Self::from_fn(model, |prefix| codes.contains(&(prefix.len(), model.encode(prefix))))
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `T <= t` on the history `code` of length `t`.
    pub fn is_stopped(&self, t: usize, code: usize) -> bool {
        self.stopped[t][code]
    }

    /// Stopping time along a full path of length `H`.
    pub fn stopping_time(&self, path: &[usize]) -> usize {
        let mut code = 0;
        if self.stopped[0][0] {
            return 0;
        }
        for (i, &x) in path.iter().enumerate() {
            code = code * self.k + x;
            if self.stopped[i + 1][code] {
                return i + 1;
            }
        }
        self.horizon
    }

    /// Whether the full path only stopped because the horizon was reached.
    pub fn is_forced(&self, path_code: usize) -> bool {
        self.forced[path_code]
    }
}

/// Randomization `pi_t = varpi_t p_t` of the change time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeTimePrior {
    varpi: Vec<f64>,
    /// `trigger[t][code] = p_t(history)`
    trigger: Vec<Vec<f64>>,
}

impl ChangeTimePrior {
    /// Validates `sum varpi = 1` and `E_inf[p_t] = 1` wherever `varpi_t > 0`;
    /// `p_t` is reset to 1 where `varpi_t = 0`.
    pub fn new(model: &DiscreteChangeModel, varpi: Vec<f64>, trigger: Vec<Vec<f64>>) -> Result<Self, FrameworkError> {
        let h = model.horizon();
        if varpi.len() != h + 1 {
            return Err(FrameworkError::PriorLength {
                expected: h + 1,
                found: varpi.len(),
            });
        }
        if let Some(i) = varpi.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FrameworkError::NegativeWeight(i));
        }
        let sum: f64 = varpi.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(FrameworkError::PriorNotNormalized(sum));
        }
        if trigger.len() != h + 1 {
            return Err(FrameworkError::TriggerShape {
                t: trigger.len().min(h),
                expected: model.histories(trigger.len().min(h)),
            });
        }
        let pre = model.pre_prefix_probs();
        let mut trigger = trigger;
        for t in 0..=h {
            let n = model.histories(t);
            if trigger[t].len() != n || trigger[t].iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(FrameworkError::TriggerShape { t, expected: n });
            }
            if varpi[t] == 0.0 {
                trigger[t] = vec![1.0; n];
                continue;
            }
            let mean: f64 = pre[t].iter().zip(&trigger[t]).map(|(w, p)| w * p).sum();
            if (mean - 1.0).abs() > NORMALIZATION_TOL {
                return Err(FrameworkError::TriggerNotNormalized { t, mean });
            }
        }
        Ok(Self { varpi, trigger })
    }

    /// `p_t = 1`: the change time does not depend on the observed history.
    pub fn history_independent(model: &DiscreteChangeModel, varpi: Vec<f64>) -> Result<Self, FrameworkError> {
        let trigger = (0..=model.horizon()).map(|t| vec![1.0; model.histories(t)]).collect();
        Self::new(model, varpi, trigger)
    }

    /// `varpi_t` proportional to `(1 - delta) delta^t` on `0..=H`, `p_t = 1`.
    pub fn geometric(model: &DiscreteChangeModel, delta: f64) -> Result<Self, FrameworkError> {
        Self::history_independent(model, geometric_weights(model.horizon(), delta)?)
    }

    /// All change mass on one history `prefix` at time `prefix.len()`.
    pub fn point_mass(model: &DiscreteChangeModel, prefix: &[usize]) -> Result<Self, FrameworkError> {
        let t = prefix.len();
        if t > model.horizon() {
            return Err(FrameworkError::TimeOutOfRange {
                t,
                horizon: model.horizon(),
            });
        }
        let prob = model.pre_probability(prefix);
        if prob <= 0.0 {
            return Err(FrameworkError::NullHistory);
        }
        let mut varpi = vec![0.0; model.horizon() + 1];
        varpi[t] = 1.0;
        let mut trigger: Vec<Vec<f64>> = (0..=model.horizon()).map(|s| vec![1.0; model.histories(s)]).collect();
        trigger[t] = vec![0.0; model.histories(t)];
        trigger[t][model.encode(prefix)] = 1.0 / prob;
        // exact normalization can miss the 1e-12 window for tiny prob; bypass re-validation
        Ok(Self { varpi, trigger })
    }

    pub fn varpi(&self) -> &[f64] {
        &self.varpi
    }

    pub fn trigger(&self, t: usize, code: usize) -> f64 {
        self.trigger[t][code]
    }
}

/// Normalized geometric weights `(1 - delta) delta^t` on `0..=horizon`.
pub fn geometric_weights(horizon: usize, delta: f64) -> Result<Vec<f64>, FrameworkError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(FrameworkError::Document(format!(
            "geometric parameter delta must lie in [0, 1), got {delta}"
        )));
    }
    let raw: Vec<f64> = (0..=horizon).map(|t| (1.0 - delta) * delta.powi(t as i32)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// A measure value with where the supremum was attained.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureValue {
    pub value: f64,
    pub argmax_t: Option<usize>,
    pub argmax_history: Option<Vec<usize>>,
    /// `P_0(the horizon forced the stop)`: how much post-change mass the
    /// truncation at `H` cut off.
    pub cap_error: f64,
}

/// Per-history quantities of a rule on a model, shared by all measures.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    model: &'a DiscreteChangeModel,
    rule: &'a StoppingRule,
    pre: Vec<Vec<f64>>,
    /// `E_0[(T - t)^+ | x_1..x_t]`
    delay: Vec<Vec<f64>>,
    cap_error: f64,
}

impl<'a> Evaluation<'a> {
    pub fn new(model: &'a DiscreteChangeModel, rule: &'a StoppingRule) -> Self {
        let k = model.symbols();
        let h = model.horizon();
        let post = model.post_dist();
        let pre = model.pre_prefix_probs();

        // backward induction under the post-change measure
        let mut delay = vec![Vec::new(); h + 1];
        let mut forced_prob = vec![Vec::new(); h + 1];
        delay[h] = vec![0.0; model.histories(h)];
        forced_prob[h] = rule.forced.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        for t in (0..h).rev() {
            let n = model.histories(t);
            let mut d = vec![0.0; n];
            let mut f = vec![0.0; n];
            for c in 0..n {
                if rule.is_stopped(t, c) {
                    continue;
                }
                let mut dc = 1.0;
                let mut fc = 0.0;
                for (x, &q) in post.iter().enumerate() {
                    dc += q * delay[t + 1][c * k + x];
                    fc += q * forced_prob[t + 1][c * k + x];
                }
                d[c] = dc;
                f[c] = fc;
            }
            delay[t] = d;
            forced_prob[t] = f;
        }
        let cap_error = forced_prob[0][0];
        Self {
            model,
            rule,
            pre,
            delay,
            cap_error,
        }
    }

    pub fn cap_error(&self) -> f64 {
        self.cap_error
    }

    /// `E_t[(T - t)^+ | x_1..x_t]` for the history `code` of length `t`.
    pub fn conditional_delay(&self, t: usize, code: usize) -> f64 {
        self.delay[t][code]
    }

    /// `(sum_x P_inf(x) p(x) E_t[(T-t)^+|x], sum_x P_inf(x) p(x) 1{T > t})`
    fn weighted_terms(&self, t: usize, weight: impl Fn(usize) -> f64) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, &w) in self.pre[t].iter().enumerate() {
            if w == 0.0 || self.rule.is_stopped(t, c) {
                continue;
            }
            let wp = w * weight(c);
            num += wp * self.delay[t][c];
            den += wp;
        }
        (num, den)
    }

    /// `J(T) = E_tau[T - tau | T > tau]`.
    pub fn measure_j(&self, prior: &ChangeTimePrior) -> Result<MeasureValue, FrameworkError> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, &w) in prior.varpi().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (n, d) = self.weighted_terms(t, |c| prior.trigger(t, c));
            num += w * n;
            den += w * d;
        }
        if den <= 0.0 {
            return Err(FrameworkError::UndefinedMeasure(
                "the rule never stops after the change time",
            ));
        }
        Ok(MeasureValue {
            value: num / den,
            argmax_t: None,
            argmax_history: None,
            cap_error: self.cap_error,
        })
    }

    /// `J_S`: history-independent trigger `p_t = 1` with weights `varpi`.
    pub fn measure_shiryaev(&self, varpi: &[f64]) -> Result<MeasureValue, FrameworkError> {
        let prior = ChangeTimePrior::history_independent(self.model, varpi.to_vec())?;
        self.measure_j(&prior)
    }

    /// `J_P = max_t E_t[T - t | T > t]`, skipping `t` with `P_inf(T > t) = 0`.
    pub fn measure_pollak(&self) -> Result<MeasureValue, FrameworkError> {
        let mut best: Option<(f64, usize)> = None;
        for t in 0..=self.model.horizon() {
            let (num, den) = self.weighted_terms(t, |_| 1.0);
            if den <= 0.0 {
                continue;
            }
            let v = num / den;
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, t));
            }
        }
        let (value, t) = best.ok_or(FrameworkError::UndefinedMeasure("P_inf(T > t) = 0 for every t"))?;
        Ok(MeasureValue {
            value,
            argmax_t: Some(t),
            argmax_history: None,
            cap_error: self.cap_error,
        })
    }

    /// `max_{t in times} essup E_t[(T - t)^+ | F_t]` over positive-probability
    /// histories that have not stopped by `t`.
    fn worst_case(&self, times: impl IntoIterator<Item = usize>) -> Result<MeasureValue, FrameworkError> {
        let mut best: Option<(f64, usize, usize)> = None;
        for t in times {
            for (c, &w) in self.pre[t].iter().enumerate() {
                if w <= 0.0 || self.rule.is_stopped(t, c) {
                    continue;
                }
                let v = self.delay[t][c];
                if best.is_none_or(|(b, _, _)| v > b) {
                    best = Some((v, t, c));
                }
            }
        }
        let (value, t, c) = best.ok_or(FrameworkError::UndefinedMeasure(
            "the rule stops before every admissible change time",
        ))?;
        Ok(MeasureValue {
            value,
            argmax_t: Some(t),
            argmax_history: Some(self.model.decode(c, t)),
            cap_error: self.cap_error,
        })
    }

    /// `J_L`, the worst case over change times and pre-change histories.
    pub fn measure_lorden(&self) -> Result<MeasureValue, FrameworkError> {
        self.worst_case(0..=self.model.horizon())
    }

    /// `J_EL`: as [`Self::measure_lorden`] with the change restricted to `times`.
    pub fn measure_extended_lorden(&self, times: &[usize]) -> Result<MeasureValue, FrameworkError> {
        if times.is_empty() {
            return Err(FrameworkError::EmptyTimes);
        }
        let horizon = self.model.horizon();
        if let Some(&t) = times.iter().find(|&&t| t > horizon) {
            return Err(FrameworkError::TimeOutOfRange { t, horizon });
        }
        self.worst_case(times.iter().copied())
    }
}

pub fn measure_j(
    model: &DiscreteChangeModel,
    prior: &ChangeTimePrior,
    rule: &StoppingRule,
) -> Result<MeasureValue, FrameworkError> {
    Evaluation::new(model, rule).measure_j(prior)
}

pub fn measure_shiryaev(
    model: &DiscreteChangeModel,
    varpi: &[f64],
    rule: &StoppingRule,
) -> Result<MeasureValue, FrameworkError> {
    Evaluation::new(model, rule).measure_shiryaev(varpi)
}

pub fn measure_pollak(model: &DiscreteChangeModel, rule: &StoppingRule) -> Result<MeasureValue, FrameworkError> {
    Evaluation::new(model, rule).measure_pollak()
}

pub fn measure_lorden(model: &DiscreteChangeModel, rule: &StoppingRule) -> Result<MeasureValue, FrameworkError> {
    Evaluation::new(model, rule).measure_lorden()
}

pub fn measure_extended_lorden(
    model: &DiscreteChangeModel,
    rule: &StoppingRule,
    times: &[usize],
) -> Result<MeasureValue, FrameworkError> {
    Evaluation::new(model, rule).measure_extended_lorden(times)
}

/// `E_tau[X_tau] = sum_t varpi_t E_inf[p_t E_0[X_t | F_t]]` for a nonnegative
/// functional `X(t, x_1..x_H)` of the change time and the full path.
pub fn randomized_expectation(
    model: &DiscreteChangeModel,
    prior: &ChangeTimePrior,
    x: impl Fn(usize, &[usize]) -> f64,
) -> Result<f64, FrameworkError> {
    struct Walk<'m, F> {
        model: &'m DiscreteChangeModel,
        prior: &'m ChangeTimePrior,
        x: F,
        path: Vec<usize>,
    }

    impl<F: Fn(usize, &[usize]) -> f64> Walk<'_, F> {
        // depth-first over the path tree; symbols before `t` are pre-change
        fn descend(&mut self, t: usize, weight: f64) -> Result<f64, FrameworkError> {
            let depth = self.path.len();
            if depth == self.model.horizon() {
                let v = (self.x)(t, &self.path);
                if !(v.is_finite() && v >= 0.0) {
                    return Err(FrameworkError::NegativeIntegrand { t, value: v });
                }
                return Ok(weight * v);
            }
            let dist = if depth < t {
                self.model.pre_dist()
            } else {
                self.model.post_dist()
            };
            let mut total = 0.0;
            for (sym, &q) in dist.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                self.path.push(sym);
                let mut w = weight * q;
                if depth + 1 == t {
                    w *= self.prior.trigger(t, self.model.encode(&self.path));
                }
                if w != 0.0 {
                    total += self.descend(t, w)?;
                }
                self.path.pop();
            }
            Ok(total)
        }
    }

    let mut walk = Walk {
        model,
        prior,
        x,
        path: Vec::with_capacity(model.horizon()),
    };
    let mut total = 0.0;
    for (t, &w) in prior.varpi().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        // p_0 acts on the empty history
        let start = if t == 0 { w * prior.trigger(0, 0) } else { w };
        total += walk.descend(t, start)?;
    }
    Ok(total)
}

/// `max_t a_t / b_t` with `0/0 = 0`; equals the supremum over probability
/// weights `w` of `sum w a / sum w b`. Returns the value and its first index.
pub fn sup_weighted_ratio(a: &[f64], b: &[f64]) -> Result<(f64, usize), FrameworkError> {
    if a.is_empty() || a.len() != b.len() {
        return Err(FrameworkError::InvalidSequences);
    }
    let valid = |v: &f64| v.is_finite() && *v >= 0.0;
    if !a.iter().all(valid) || !b.iter().all(valid) {
        return Err(FrameworkError::InvalidSequences);
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, (&ai, &bi)) in a.iter().zip(b).enumerate() {
        let ratio = if bi == 0.0 {
            if ai > 0.0 {
                return Err(FrameworkError::InfiniteSupremum(i));
            }
            0.0
        } else {
            ai / bi
        };
        if ratio > best.0 {
            best = (ratio, i);
        }
    }
    Ok(best)
}
