mod common;

use std::sync::Arc;

use divtest_core::asymptotics::{kl_quadratic_approx, predict_divergence_test, predict_np};
use divtest_core::divergence::{alpha_div, chi_sq, f_div, kl, pq_statistics};
use divtest_core::hypothesis::{exact_calibrate, type1_exact, type2_exact, TestConfig};
use divtest_core::optimizer::{feasibility_data, kkt_minimize};
use divtest_core::rounding::round_to_type;
use divtest_core::simplex::{enumerate_types, log_type_class_prob};
use divtest_core::{Distribution, DivergenceSpec, Error, SeededSource};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::random_distribution;

fn dist(k: usize, floor: f64) -> impl Strategy<Value = Distribution> {
    prop::collection::vec(0.0f64..1.0, k).prop_map(move |w| {
        let s: f64 = w.iter().map(|x| x + 1e-3).sum();
        let free = 1.0 - floor * k as f64;
        let mut p: Vec<f64> = w.iter().map(|x| floor + free * (x + 1e-3) / s).collect();
        let head: f64 = p[..k - 1].iter().sum();
        p[k - 1] = 1.0 - head;
        Distribution::new(p).unwrap()
    })
}

fn pair(floor: f64) -> impl Strategy<Value = (Distribution, Distribution)> {
    (2usize..=4).prop_flat_map(move |k| (dist(k, floor), dist(k, floor)))
}

fn specs() -> Vec<DivergenceSpec> {
    vec![
        DivergenceSpec::Kl,
        DivergenceSpec::ChiSq,
        DivergenceSpec::Alpha(-0.5),
        DivergenceSpec::Alpha(0.0),
        DivergenceSpec::Alpha(2.0),
        DivergenceSpec::Renyi(0.5),
        DivergenceSpec::Renyi(2.0),
        DivergenceSpec::generic(
            Arc::new(|u: f64| if u > 0.0 { u * u.ln() - u + 1.0 } else { 1.0 }),
            1.0,
        )
        .unwrap(),
    ]
}

/// Unit tangent direction (`Σ v = 0`); `P + s v` stays positive for
/// `s <= 1e-2` when `min P >= 0.1`.
fn direction(raw: &[f64]) -> Vec<f64> {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let mut v: Vec<f64> = raw.iter().map(|x| x - mean).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

const STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Some tenfold step over `STEPS` shrinks the remainder by `10^{2.9}` or
/// more, up to `noise` of absolute rounding error. A remainder of quadratic
/// order shrinks by about 100x in every decade; a cubic one can look slower
/// in one decade only, where the cubic and quartic terms nearly cancel.
fn cubic_decay(rems: &[f64], noise: f64) -> bool {
    rems.windows(2)
        .any(|w| w[1] <= w[0] * 10f64.powf(-2.9) + noise)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn type_class_sandwich(q in dist(3, 0.02), n in 1u64..=25) {
        let k = 3i32;
        for t in enumerate_types(3, n).unwrap() {
            if t.counts().contains(&0) {
                continue;
            }
            let lp = log_type_class_prob(&t, &q).unwrap();
            let e = -(n as f64) * kl(&t.probs(), &q).unwrap();
            let slack = 1e-12 * e.abs().max(1.0);
            prop_assert!(lp <= e + slack);
            prop_assert!(lp + slack >= e - k as f64 * ((n + 1) as f64).ln());
        }
    }

    #[test]
    fn divergences_vanish_only_on_the_diagonal((t, p) in pair(0.01)) {
        for spec in specs() {
            let at_p = spec.eval(p.probs(), &p).unwrap();
            prop_assert!(at_p.abs() <= 1e-12, "{} at P: {}", spec.label(), at_p);
            let off = spec.eval(t.probs(), &p).unwrap();
            prop_assert!(off >= -1e-12);
            if t.max_gap(&p).unwrap() > 1e-3 {
                prop_assert!(off > 1e-12, "{} off-diagonal: {}", spec.label(), off);
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_the_reference(p in (2usize..=4).prop_flat_map(|k| dist(k, 0.05))) {
        let h = 1e-5;
        let k = p.k();
        for spec in specs() {
            let mut norm2 = 0.0;
            for i in 0..k - 1 {
                let mut plus = p.probs().to_vec();
                let mut minus = p.probs().to_vec();
                plus[i] += h;
                plus[k - 1] -= h;
                minus[i] -= h;
                minus[k - 1] += h;
                let g = (spec.eval(&plus, &p).unwrap() - spec.eval(&minus, &p).unwrap()) / (2.0 * h);
                norm2 += g * g;
            }
            prop_assert!(norm2.sqrt() <= 1e-6, "{}: {}", spec.label(), norm2.sqrt());
        }
    }

    #[test]
    fn quadratic_coefficient_is_eta(
        p in dist(3, 0.1),
        raw in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let v = direction(&raw);
        prop_assume!(raw.iter().any(|x| (x - raw[0]).abs() > 1e-3));
        for spec in specs() {
            let rems: Vec<f64> = STEPS
                .iter()
                .map(|s| {
                    let t: Vec<f64> = p.probs().iter().zip(&v).map(|(pi, vi)| pi + s * vi).collect();
                    (spec.eval(&t, &p).unwrap() - spec.eta() * chi_sq(&t, &p).unwrap()).abs()
                })
                .collect();
            prop_assert!(cubic_decay(&rems, 64.0 * f64::EPSILON), "{}: {:?}", spec.label(), rems);
        }
    }

    #[test]
    fn kl_quadratic_remainder_is_cubic(
        (p, q) in (dist(3, 0.1), dist(3, 0.1)),
        raw in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let v = direction(&raw);
        prop_assume!(raw.iter().any(|x| (x - raw[0]).abs() > 1e-3));
        let scale = kl(p.probs(), &q).unwrap().max(1.0);
        let rems: Vec<f64> = STEPS
            .iter()
            .map(|s| {
                let t: Vec<f64> = p.probs().iter().zip(&v).map(|(pi, vi)| pi + s * vi).collect();
                (kl(&t, &q).unwrap() - kl_quadratic_approx(&t, &p, &q).unwrap()).abs()
            })
            .collect();
        prop_assert!(cubic_decay(&rems, 64.0 * f64::EPSILON * scale), "{:?}", rems);
    }

    #[test]
    fn f_div_with_u_ln_u_is_kl((t, p) in pair(0.0)) {
        let f = |u: f64| if u > 0.0 { u * u.ln() } else { 0.0 };
        let a = f_div(&f, t.probs(), &p).unwrap();
        let b = kl(t.probs(), &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn remark_identity((p, q) in pair(0.01)) {
        prop_assume!(p.max_gap(&q).unwrap() > 1e-9);
        let s = pq_statistics(&p, &q).unwrap();
        let centred: f64 = p.probs().iter().zip(&s.alphas).map(|(pi, a)| pi * (a - s.d)).sum();
        prop_assert!(centred.abs() <= 1e-14);
        prop_assert!(s.v > 0.0);
        prop_assert!(!feasibility_data(&p, &q).unwrap().index_set_i.is_empty());
    }

    #[test]
    fn divergence_prediction_below_np(
        (p, q) in pair(0.02),
        n in 10u64..100_000,
        eps in 0.001f64..=0.5,
    ) {
        prop_assume!(p.max_gap(&q).unwrap() > 1e-6);
        let a = predict_divergence_test(&p, &q, n, eps).unwrap();
        let b = predict_np(&p, &q, n, eps).unwrap();
        prop_assert!(a.predicted_minus_ln_beta < b.predicted_minus_ln_beta);
        prop_assert!(a.second_order.abs() > b.second_order.abs() || b.second_order == 0.0);
    }

    #[test]
    fn kkt_invariants((p, q) in pair(0.05), frac in 0.01f64..0.99) {
        prop_assume!(p.max_gap(&q).unwrap() > 1e-6);
        let s = pq_statistics(&p, &q).unwrap();
        let tau = feasibility_data(&p, &q).unwrap().tau;
        let r = (frac * s.v.sqrt() / tau).powi(2);
        let sol = kkt_minimize(&p, &q, r).unwrap();
        prop_assert!(sol.gamma_star.probs().iter().all(|&g| g > 0.0));
        prop_assert!((chi_sq(sol.gamma_star.probs(), &p).unwrap() - r).abs() <= 1e-10);
        prop_assert!(sol.stationarity_residual(&p) <= 1e-10);
        let too_big = (1.01 * s.v.sqrt() / tau).powi(2);
        let is_radius_err = matches!(kkt_minimize(&p, &q, too_big), Err(Error::RadiusTooLarge { .. }));
        prop_assert!(is_radius_err);
    }

    #[test]
    fn rounding_invariants((p, q) in pair(0.05)) {
        prop_assume!(p.max_gap(&q).unwrap() > 1e-3);
        let s = pq_statistics(&p, &q).unwrap();
        let tau = feasibility_data(&p, &q).unwrap().tau;
        let r = 0.25 * s.v / (tau * tau);
        let mut n = 10u64;
        let t = loop {
            match round_to_type(&p, &q, n, r) {
                Ok(t) => break t,
                Err(Error::NTooSmall { .. }) if n < 10u64.pow(12) => n *= 10,
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        };
        prop_assert_eq!(t.t_star.n(), n);
        prop_assert!(t.chi_sq <= r);
        prop_assert!(t.ell_gap <= t.kappa_bound);
    }

    #[test]
    fn errors_are_monotone_in_threshold(p0 in dist(2, 0.05), q in dist(2, 0.05), n in 5u64..60) {
        let mut last1 = f64::INFINITY;
        let mut last2 = f64::NEG_INFINITY;
        for r in [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.3, 1.0] {
            let cfg = TestConfig::new(DivergenceSpec::Kl, r, p0.clone()).unwrap();
            let a = type1_exact(&cfg, n).unwrap().value;
            let b = type2_exact(&cfg, &q, n).unwrap().value;
            prop_assert!(a <= last1 + 1e-15);
            prop_assert!(b >= last2 - 1e-15);
            last1 = a;
            last2 = b;
        }
    }

    #[test]
    fn exact_calibration_meets_eps(
        p0 in (2usize..=3).prop_flat_map(|k| dist(k, 0.05)),
        n in 1u64..40,
        eps in 0.01f64..0.99,
    ) {
        for spec in [DivergenceSpec::Kl, DivergenceSpec::ChiSq, DivergenceSpec::Alpha(2.0)] {
            let c = exact_calibrate(&spec, &p0, n, eps).unwrap();
            prop_assert!(c.achieved_type1 <= eps);
            let cfg = TestConfig::new(spec, c.r_star, p0.clone()).unwrap();
            let a = type1_exact(&cfg, n).unwrap().value;
            prop_assert!((a - c.achieved_type1).abs() <= 1e-12);
        }
    }
}

#[test]
fn pinsker_type_bound() {
    let mut rng: ChaCha8Rng = SeededSource::new(99, 14).rng(0);
    let alphas = [-3.0, -2.0, -0.5, 0.0, 0.5, 2.0, 3.0];
    for _ in 0..10_000 {
        let k = rng.random_range(2..=4);
        let t = random_distribution(&mut rng, k, 0.0);
        let p = random_distribution(&mut rng, k, 0.0);
        let l1: f64 = t
            .probs()
            .iter()
            .zip(p.probs())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let bound = 0.5 * l1 * l1;
        assert!(kl(t.probs(), &p).unwrap() >= bound - 1e-12);
        for &a in &alphas {
            let v = alpha_div(a, t.probs(), &p).unwrap();
            assert!(v >= bound - 1e-12, "alpha {a}: {v} < {bound}");
        }
    }
}

#[test]
fn type_count_bound_and_total_probability() {
    for k in 2..=3usize {
        for n in [1u64, 7, 50, 200] {
            let mut rng: ChaCha8Rng = SeededSource::new(5, n).rng(k as u64);
            let q = random_distribution(&mut rng, k, 0.01);
            let total: f64 = enumerate_types(k, n)
                .unwrap()
                .map(|t| log_type_class_prob(&t, &q).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn cubic_decay_rejects_a_wrong_eta() {
    let p = Distribution::new(vec![0.3, 0.3, 0.4]).unwrap();
    let v = direction(&[0.4, -0.9, 0.2]);
    for spec in specs() {
        let rems: Vec<f64> = STEPS
            .iter()
            .map(|s| {
                let t: Vec<f64> = p
                    .probs()
                    .iter()
                    .zip(&v)
                    .map(|(pi, vi)| pi + s * vi)
                    .collect();
                (spec.eval(&t, &p).unwrap() - 1.1 * spec.eta() * chi_sq(&t, &p).unwrap()).abs()
            })
            .collect();
        assert!(!cubic_decay(&rems, 64.0 * f64::EPSILON), "{}", spec.label());
    }
}
