//! Acceptance checks, one test per criterion. Each prints a single
//! `PASS`/`FAIL` line with the measured quantities and then asserts.
//!
//! Run with `cargo test -p ecusum --test acceptance -- --nocapture` to see
//! the report lines.

use ecusum::analytic::{
    calibrate_threshold, curve_table, delay_g, false_alarm_h, log_grid, optimality_potential, specialized_rates,
    Branch, RunLengthFunction,
};
use ecusum::framework::{
    geometric_weights, randomized_expectation, sup_weighted_ratio, ChangeTimePrior, DiscreteChangeModel, Evaluation,
    StoppingRule,
};
use ecusum::simulate::{estimate_exp_moment_at_stop, monte_carlo_run_length, record_path, SimConfig, Variant};
use ecusum::stream::run_detector;
use ecusum::{DriftChangeSpec, Regime, Threshold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {id:>2} ({name}): {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn spec(mu: f64, lambda: f64) -> DriftChangeSpec {
    DriftChangeSpec::new(mu, lambda).unwrap()
}

fn nu(v: f64) -> Threshold {
    Threshold::new(v).unwrap()
}

#[test]
fn criterion_01_closed_form_spot_values() {
    let s = spec(1.0, 1.0);
    let g = delay_g(0.0, nu(1.0), &s).unwrap();
    let h = false_alarm_h(0.0, nu(1.0), &s).unwrap();
    let pass = (g - 1.3678794).abs() <= 1e-7 && (h - 4.8731273).abs() <= 1e-7;
    report(
        1,
        "closed-form spot values",
        pass,
        &format!("g(0) = {g:.10}, h(0) = {h:.10}"),
    );
}

/// `(a, b, lambda)` for both regimes over a small parameter grid.
fn parameter_grid() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for &mu in &[0.5, 1.0, 2.0] {
        for &lambda in &[0.5, 1.0, 4.0] {
            for regime in [Regime::PreChange, Regime::PostChange] {
                let d = spec(mu, lambda).generalized(regime, 0.0).unwrap();
                out.push((d.a, d.b, lambda));
            }
        }
    }
    // generic drift / diffusion pairs
    out.extend([(0.3, 0.7, 1.5), (-0.8, 1.3, 0.4), (1.7, 2.5, 2.0), (-0.2, 0.4, 3.0)]);
    out
}

#[test]
fn criterion_02_ode_residual_suite() {
    let level = 1.5;
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (a, b, lambda) in parameter_grid() {
        let f = RunLengthFunction::new(nu(level), a, b, lambda).unwrap();
        for i in 0..500 {
            let y = -4.0 + (level + 4.0) * i as f64 / 499.0;
            worst = worst.max(f.ode_residual(y).unwrap().abs());
            count += 1;
        }
    }
    report(
        2,
        "generator equation residual",
        worst <= 1e-9,
        &format!("max |residual| = {worst:.3e} over {count} points"),
    );
}

#[test]
fn criterion_03_smoothness_and_boundary() {
    let level = 1.5;
    let mut boundary_exact = true;
    let mut worst_match = 0.0_f64;
    let mut bound_ok = true;
    let mut decreasing = true;
    for (a, b, lambda) in parameter_grid() {
        let f = RunLengthFunction::new(nu(level), a, b, lambda).unwrap();
        boundary_exact &= f.value(level).unwrap() == 0.0;
        let jumps = [
            f.value_on(Branch::Upper, 0.0) - f.value_on(Branch::Lower, 0.0),
            f.derivative_on(Branch::Upper, 0.0) - f.derivative_on(Branch::Lower, 0.0),
            f.second_derivative_on(Branch::Upper, 0.0) - f.second_derivative_on(Branch::Lower, 0.0),
        ];
        let scale = f.value(0.0).unwrap().abs().max(1.0);
        for j in jumps {
            worst_match = worst_match.max(j.abs() / scale);
        }
        let f0 = f.value(0.0).unwrap();
        // deep in the lower branch f saturates at 1/lambda + f(0) below f64 resolution
        let ys: Vec<f64> = (0..=400).map(|i| -3.0 + (level + 3.0) * i as f64 / 400.0).collect();
        let vals: Vec<f64> = ys.iter().map(|&y| f.value(y).unwrap()).collect();
        bound_ok &= vals.iter().all(|&v| v <= 1.0 / lambda + f0 + 1e-12 * f0.abs().max(1.0));
        decreasing &= vals.windows(2).all(|w| w[0] > w[1]);
    }
    let pass = boundary_exact && worst_match <= 1e-9 && bound_ok && decreasing;
    report(
        3,
        "smoothness and boundary",
        pass,
        &format!(
            "f(nu) = 0 exactly: {boundary_exact}; max C0/C1/C2 mismatch at 0 = {worst_match:.3e}; \
             f <= 1/lambda + f(0): {bound_ok}; strictly decreasing: {decreasing}"
        ),
    );
}

#[test]
fn criterion_04_calibration_round_trip() {
    let mut worst = 0.0_f64;
    for &mu in &[0.5, 1.0, 2.0] {
        for &lambda in &[0.1, 1.0, 10.0] {
            let s = spec(mu, lambda);
            for &gamma in &[0.1, 1.0, 10.0, 100.0, 1e4] {
                let level = calibrate_threshold(gamma, &s).unwrap();
                let h = false_alarm_h(0.0, level, &s).unwrap();
                worst = worst.max((h - gamma).abs() / gamma.max(1.0));
            }
        }
    }
    report(
        4,
        "calibration round trip",
        worst <= 1e-10,
        &format!("max |h(nu*) - gamma| / max(1, gamma) = {worst:.3e}"),
    );
}

#[test]
fn criterion_05_monte_carlo_vs_closed_form() {
    let s = spec(1.0, 1.0);
    let level = nu(1.0);
    let mut pass = true;
    let mut lines = Vec::new();
    for (bridge, allowance) in [(false, 0.02), (true, 0.005)] {
        for regime in [Regime::PostChange, Regime::PreChange] {
            let analytic = RunLengthFunction::for_regime(level, &s, regime)
                .unwrap()
                .value(0.0)
                .unwrap();
            let cfg = SimConfig::for_model(&s, regime, level, 0.0, 200_000, 20_240_501).with_bridge(bridge);
            let cfg = SimConfig { dt: 1e-3, ..cfg };
            let est = monte_carlo_run_length(regime, &s, level, 0.0, &cfg).unwrap();
            let diff = (est.mean - analytic).abs();
            let limit = 3.0 * est.stderr + allowance * analytic;
            let ok = diff <= limit;
            pass &= ok;
            lines.push(format!(
                "[{} {regime} bridge={bridge}: mc {:.5} ± {:.5}, analytic {analytic:.5}, |diff| {diff:.5} vs {limit:.5}]",
                if ok { "ok" } else { "over" },
                est.mean,
                est.stderr
            ));
        }
    }
    report(5, "Monte Carlo vs closed form", pass, &lines.join(" "));
}

#[test]
fn criterion_06_design_curves() {
    let ratios = [0.1, 1.0, 10.0, 100.0];
    let grid = log_grid(0.1, 1e4, 40);
    let rows = curve_table(&ratios, &grid).unwrap();
    let dominated = rows.iter().all(|r| r.ecusum_delay_norm <= r.cusum_delay_norm);
    let gap = |ri: usize, gi: usize| {
        let r = &rows[ri * grid.len() + gi];
        r.cusum_delay_norm - r.ecusum_delay_norm
    };
    let mut gap_monotone = true;
    for gi in 0..grid.len() {
        for ri in 1..ratios.len() {
            gap_monotone &= gap(ri, gi) > gap(ri - 1, gi);
        }
    }
    let last = grid.len() - 1;
    report(
        6,
        "design curves",
        rows.len() == 160 && dominated && gap_monotone,
        &format!(
            "{} rows; ECUSUM <= CUSUM everywhere: {dominated}; gap strictly increasing in ratio: {gap_monotone}; \
             gaps at gamma_norm = 1e4: {:.4} {:.4} {:.4} {:.4}",
            rows.len(),
            gap(0, last),
            gap(1, last),
            gap(2, last),
            gap(3, last)
        ),
    );
}

#[test]
fn criterion_07_optimality_identities() {
    let mut worst_rel = 0.0_f64;
    let mut potential_ok = true;
    let mut potential_at_level = 0.0_f64;
    for &(mu, lambda) in &[(1.0, 1.0), (0.5, 2.0), (2.0, 0.5), (1.0, 10.0)] {
        let s = spec(mu, lambda);
        let rates = specialized_rates(&s).unwrap();
        for &gamma in &[1.0, 10.0, 100.0] {
            let level = calibrate_threshold(gamma, &s).unwrap();
            let g = RunLengthFunction::for_regime(level, &s, Regime::PostChange).unwrap();
            let h = RunLengthFunction::for_regime(level, &s, Regime::PreChange).unwrap();
            let top = level.value();
            for i in 0..=200 {
                let y = -5.0 + (top + 5.0) * i as f64 / 200.0;
                let lhs = y.exp() * g.derivative(y).unwrap();
                let rhs = rates.r0 / rates.r_inf * h.derivative(y).unwrap();
                worst_rel = worst_rel.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
                if y < top {
                    potential_ok &= optimality_potential(y, level, &s).unwrap() < 0.0;
                }
            }
            let p = optimality_potential(top, level, &s).unwrap();
            potential_at_level = potential_at_level.max(p.abs());
        }
    }
    let pass = worst_rel <= 1e-9 && potential_at_level == 0.0 && potential_ok;
    report(
        7,
        "optimality identities",
        pass,
        &format!(
            "max rel |e^y g' - (r0/r_inf) h'| = {worst_rel:.3e}; |p(nu*)| = {potential_at_level:e}; \
             p < 0 below nu*: {potential_ok}"
        ),
    );
}

#[test]
fn criterion_08_exponential_moment_at_truncated_alarm() {
    let s = spec(1.0, 1.0);
    let mut pass = true;
    let mut lines = Vec::new();
    for &horizon in &[0.5, 2.0, 10.0] {
        let cfg = SimConfig::new(1e-3, 100_000, 8_675_309);
        let est = estimate_exp_moment_at_stop(horizon, &s, nu(1.0), &cfg).unwrap();
        let ok = est.mean >= 1.0 - 3.0 * est.stderr;
        pass &= ok;
        lines.push(format!("T = {horizon}: {:.5} ± {:.5}", est.mean, est.stderr));
    }
    report(8, "E_inf[exp(y)] at min(T, alarm) >= 1", pass, &lines.join("; "));
}

#[test]
fn criterion_09_framework_ordering_and_sup_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ordering_ok = true;
    let mut instances = 0;
    let mut worst_norm = 0.0_f64;
    while instances < 24 {
        let h = rng.random_range(1..=8);
        let model =
            DiscreteChangeModel::bernoulli(h, rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)).unwrap();
        let rule = if rng.random_bool(0.5) {
            StoppingRule::threshold_on_likelihood_ratio(&model, rng.random_range(0.0..3.0))
        } else {
            let p = rng.random_range(0.1..0.5);
            let mut table_rng = ChaCha8Rng::seed_from_u64(rng.random());
            StoppingRule::from_fn(&model, |_| table_rng.random_bool(p))
        };
        let ev = Evaluation::new(&model, &rule);
        let (Ok(jp), Ok(jl)) = (ev.measure_pollak(), ev.measure_lorden()) else {
            continue;
        };
        instances += 1;
        // the comparisons are exact up to floating-point rounding of the sums
        let tol = 1e-12 * jl.value;
        ordering_ok &= jp.value <= jl.value + tol;
        for _ in 0..5 {
            let varpi = if rng.random_bool(0.5) {
                geometric_weights(h, rng.random_range(0.0..0.99)).unwrap()
            } else {
                let raw: Vec<f64> = (0..=h).map(|_| rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            };
            if let Ok(js) = ev.measure_shiryaev(&varpi) {
                ordering_ok &= js.value <= jp.value + tol;
            }
            let prior = ChangeTimePrior::history_independent(&model, varpi).unwrap();
            let one = randomized_expectation(&model, &prior, |_, _| 1.0).unwrap();
            worst_norm = worst_norm.max((one - 1.0).abs());
        }
    }

    // supremum of sum(w a)/sum(w b) over the simplex
    let mut sup_ok = true;
    for _ in 0..20 {
        let n = rng.random_range(1..=10);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let (value, arg) = sup_weighted_ratio(&a, &b).unwrap();
        let vertex_max = (0..n).map(|i| a[i] / b[i]).fold(f64::NEG_INFINITY, f64::max);
        sup_ok &= value == vertex_max && a[arg] / b[arg] == value;
        for _ in 0..1000 {
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let num: f64 = w.iter().zip(&a).map(|(w, a)| w * a).sum();
            let den: f64 = w.iter().zip(&b).map(|(w, b)| w * b).sum();
            sup_ok &= num / den <= value * (1.0 + 1e-12);
        }
    }
    let pass = ordering_ok && sup_ok && worst_norm <= 1e-12;
    report(
        9,
        "framework ordering and sup ratio",
        pass,
        &format!(
            "{instances} instances, J_S <= J_P <= J_L: {ordering_ok}; sup ratio attained at a vertex: {sup_ok}; \
             max |E[1] - 1| = {worst_norm:.3e}"
        ),
    );
}

#[test]
fn criterion_10_replay_through_stream_detector() {
    let s = spec(1.0, 1.0);
    let level = nu(1.0);
    let mut mismatches = 0;
    let mut alarms = 0;
    for seed in 0..100u64 {
        let regime = if seed % 2 == 0 {
            Regime::PostChange
        } else {
            Regime::PreChange
        };
        let cfg = SimConfig::new(1e-3, 1, seed);
        let (outcome, records) = record_path(regime, &s, level, &cfg, 0).unwrap();
        let replay = run_detector(records, s.mu(), level, Variant::Ecusum).unwrap();
        if outcome.crossed {
            alarms += 1;
        }
        let same = match replay.alarm_time {
            Some(t) => outcome.crossed && t == outcome.time && replay.final_y == outcome.y,
            None => !outcome.crossed,
        };
        if !same {
            mismatches += 1;
        }
    }
    report(
        10,
        "replay through stream detector",
        mismatches == 0,
        &format!("100 seeds, {alarms} alarms, {mismatches} mismatches"),
    );
}
