//! Framework measures against flat path enumeration: every quantity is
//! recomputed from `stopping_time` on full paths, without the backward
//! induction used by the library.

use ecusum::framework::document::evaluate_document;
use ecusum::framework::{
    geometric_weights, measure_j, randomized_expectation, sup_weighted_ratio, ChangeTimePrior, DiscreteChangeModel,
    Evaluation, StoppingRule,
};
use proptest::prelude::*;

const REL: f64 = 1e-12;

fn path_prob(model: &DiscreteChangeModel, path: &[usize], change: usize) -> f64 {
    path.iter()
        .enumerate()
        .map(|(i, &x)| {
            if i < change {
                model.pre_dist()[x]
            } else {
                model.post_dist()[x]
            }
        })
        .product()
}

fn all_paths(model: &DiscreteChangeModel) -> Vec<Vec<usize>> {
    let h = model.horizon();
    (0..model.histories(h)).map(|c| model.decode(c, h)).collect()
}

/// `(sum_t varpi_t E_t[p_t (T-t)^+], sum_t varpi_t E_t[p_t 1{T>t}])`
fn flat_j_terms(model: &DiscreteChangeModel, prior: &ChangeTimePrior, rule: &StoppingRule) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for path in all_paths(model) {
        let stop = rule.stopping_time(&path);
        for (t, &w) in prior.varpi().iter().enumerate() {
            if w == 0.0 || stop <= t {
                continue;
            }
            let p = w * path_prob(model, &path, t) * prior.trigger(t, model.encode(&path[..t]));
            num += p * (stop - t) as f64;
            den += p;
        }
    }
    (num, den)
}

/// `E_t[(T-t)^+ | x_1..x_t]` by summing over continuations.
fn flat_conditional_delay(model: &DiscreteChangeModel, rule: &StoppingRule, prefix: &[usize]) -> f64 {
    let t = prefix.len();
    let rest = model.horizon() - t;
    let mut total = 0.0;
    for c in 0..model.histories(rest) {
        let tail = model.decode(c, rest);
        let mut path = prefix.to_vec();
        path.extend_from_slice(&tail);
        let prob: f64 = tail.iter().map(|&x| model.post_dist()[x]).product();
        total += prob * rule.stopping_time(&path).saturating_sub(t) as f64;
    }
    total
}

fn survives(rule: &StoppingRule, model: &DiscreteChangeModel, prefix: &[usize]) -> bool {
    // T > t iff no prefix up to length t stopped
    (0..=prefix.len()).all(|s| !rule.is_stopped(s, model.encode(&prefix[..s])))
}

/// Lorden's worst case with the maximizations reversed: over full
/// pre-change paths first, then over change times along each path.
fn lorden_paths_first(model: &DiscreteChangeModel, rule: &StoppingRule) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for path in all_paths(model) {
        if model.pre_probability(&path) <= 0.0 {
            continue;
        }
        for t in 0..=model.horizon() {
            let prefix = &path[..t];
            if survives(rule, model, prefix) {
                best = best.max(flat_conditional_delay(model, rule, prefix));
            }
        }
    }
    best
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL * a.abs().max(b.abs()).max(1.0)
}

fn instance() -> impl Strategy<Value = (DiscreteChangeModel, StoppingRule, Vec<f64>)> {
    (
        1usize..=7,
        0.05f64..0.95,
        0.05f64..0.95,
        any::<bool>(),
        0.0f64..3.0,
        any::<u64>(),
        0.0f64..0.99,
    )
        .prop_map(|(h, q_pre, q_post, table, c, bits, delta)| {
            let model = DiscreteChangeModel::bernoulli(h, q_pre, q_post).unwrap();
            let rule = if table {
                // pseudo-random prefix table, stopping with probability ~1/4
                StoppingRule::from_fn(&model, |p| {
                    let key = ((1u64 << p.len()) - 1 + model.encode(p) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    (key ^ bits).rotate_left(17).is_multiple_of(4)
                })
            } else {
                StoppingRule::threshold_on_likelihood_ratio(&model, c)
            };
            let varpi = geometric_weights(h, delta).unwrap();
            (model, rule, varpi)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shiryaev_matches_flat_enumeration((model, rule, varpi) in instance()) {
        let prior = ChangeTimePrior::history_independent(&model, varpi).unwrap();
        let (num, den) = flat_j_terms(&model, &prior, &rule);
        match measure_j(&model, &prior, &rule) {
            Ok(v) => prop_assert!(close(v.value, num / den), "{} vs {}", v.value, num / den),
            Err(_) => prop_assert_eq!(den, 0.0),
        }
    }

    #[test]
    fn ordering_chain_holds((model, rule, varpi) in instance()) {
        let ev = Evaluation::new(&model, &rule);
        if let (Ok(s), Ok(p), Ok(l)) = (ev.measure_shiryaev(&varpi), ev.measure_pollak(), ev.measure_lorden()) {
            prop_assert!(s.value <= p.value * (1.0 + REL), "J_S {} > J_P {}", s.value, p.value);
            prop_assert!(p.value <= l.value * (1.0 + REL), "J_P {} > J_L {}", p.value, l.value);
        }
    }

    #[test]
    fn lorden_is_order_independent((model, rule, _v) in instance()) {
        let ev = Evaluation::new(&model, &rule);
        if let Ok(l) = ev.measure_lorden() {
            prop_assert!(close(l.value, lorden_paths_first(&model, &rule)));
            let h = l.argmax_history.clone().unwrap();
            prop_assert!(close(l.value, flat_conditional_delay(&model, &rule, &h)));
        }
    }

    #[test]
    fn pollak_matches_flat_enumeration((model, rule, _v) in instance()) {
        let ev = Evaluation::new(&model, &rule);
        let mut best = None::<f64>;
        for t in 0..=model.horizon() {
            let mut varpi = vec![0.0; model.horizon() + 1];
            varpi[t] = 1.0;
            let prior = ChangeTimePrior::history_independent(&model, varpi).unwrap();
            let (num, den) = flat_j_terms(&model, &prior, &rule);
            if den > 0.0 {
                best = Some(best.map_or(num / den, |b: f64| b.max(num / den)));
            }
        }
        match (ev.measure_pollak(), best) {
            (Ok(p), Some(b)) => prop_assert!(close(p.value, b)),
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "mismatch {:?} {:?}", a, b),
        }
    }

    #[test]
    fn lorden_attained_by_point_mass_prior((model, rule, _v) in instance()) {
        let ev = Evaluation::new(&model, &rule);
        if let Ok(l) = ev.measure_lorden() {
            let prior = ChangeTimePrior::point_mass(&model, l.argmax_history.as_ref().unwrap()).unwrap();
            let j = ev.measure_j(&prior).unwrap();
            prop_assert!((j.value - l.value).abs() <= 1e-9);
        }
    }

    #[test]
    fn randomized_expectation_is_normalized((model, _r, varpi) in instance(), tilt in 0.1f64..0.9) {
        // a history-dependent trigger: mass shifted onto histories ending in 1
        let h = model.horizon();
        let q = model.pre_dist()[1];
        let trigger: Vec<Vec<f64>> = (0..=h)
            .map(|t| {
                (0..model.histories(t))
                    .map(|c| match t {
                        0 => 1.0,
                        _ if c % 2 == 1 => tilt / q,
                        _ => (1.0 - tilt) / (1.0 - q),
                    })
                    .collect()
            })
            .collect();
        let prior = ChangeTimePrior::new(&model, varpi, trigger).unwrap();
        let one = randomized_expectation(&model, &prior, |_, _| 1.0).unwrap();
        prop_assert!((one - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sup_weighted_ratio_bounds_simplex_ratios(
        pairs in prop::collection::vec((0.0f64..10.0, 0.01f64..10.0), 1..8),
        weights in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 8), 20),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (max, arg) = sup_weighted_ratio(&a, &b).unwrap();
        for w in weights {
            let w = &w[..a.len()];
            let num: f64 = w.iter().zip(&a).map(|(w, a)| w * a).sum();
            let den: f64 = w.iter().zip(&b).map(|(w, b)| w * b).sum();
            if den > 0.0 {
                prop_assert!(num / den <= max * (1.0 + REL));
            }
        }
        prop_assert_eq!(a[arg] / b[arg], max);
    }
}

#[test]
fn randomized_expectation_of_delay_matches_flat_numerator() {
    let model = DiscreteChangeModel::bernoulli(3, 0.25, 0.75).unwrap();
    let rule = StoppingRule::threshold_on_likelihood_ratio(&model, 1.0);
    let prior = ChangeTimePrior::geometric(&model, 0.5).unwrap();
    let value = randomized_expectation(&model, &prior, |t, path| {
        rule.stopping_time(path).saturating_sub(t) as f64
    })
    .unwrap();
    let (num, _) = flat_j_terms(&model, &prior, &rule);
    assert!(close(value, num), "{value} vs {num}");
}

#[test]
fn bundled_example_document() {
    let text = include_str!("../data/bernoulli_first_one.toml");
    let report = evaluate_document(text).unwrap();
    let cap = report.cap_error;
    for m in ["J_P", "J_L"] {
        let v = report.value(m).unwrap().value;
        assert!(
            (v - 4.0 / 3.0).abs() <= cap.max(1e-12) * 4.0 / 3.0 + 1e-12,
            "{m} = {v}, cap {cap}"
        );
    }
    let s = report.value("J_S").unwrap().value;
    assert!(s <= 4.0 / 3.0);
}
