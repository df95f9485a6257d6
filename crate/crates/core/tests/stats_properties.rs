use std::collections::BTreeSet;

use boxrelax::stats::{
    binomial_reference_pmf, empirical_pmf, ks_distance_to_normal, pairwise_error_correlation,
    success_probability, tv_distance, tv_distance_to_poisson, wilson_interval, Pmf, Z_95,
};
use boxrelax::theory::poisson_pmf;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, Poisson};

// TV(Binomial(200, 1.1/200), Poisson(1.1)), from a 50-digit exact summation.
const TV_BINOMIAL_200: f64 = 0.001_510_216_092_773_02;

fn rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

// Plain products, no logs, as an independent check.
fn binomial_terms(n: u64, q: f64) -> Vec<f64> {
    let mut terms = vec![(1.0 - q).powi(n as i32)];
    for k in 0..n {
        let next = terms[k as usize] * (n - k) as f64 / (k + 1) as f64 * q / (1.0 - q);
        terms.push(next);
    }
    terms
}

fn poisson_terms(lambda: f64, k_max: u64) -> Vec<f64> {
    let mut terms = vec![(-lambda).exp()];
    for k in 0..k_max {
        let next = terms[k as usize] * lambda / (k + 1) as f64;
        terms.push(next);
    }
    terms
}

#[test]
fn empirical_pmf_examples() {
    let pmf = empirical_pmf(&[0, 0, 1, 2]).unwrap();
    assert_eq!(pmf, Pmf::from([(0, 0.5), (1, 0.25), (2, 0.25)]));
    assert_eq!(empirical_pmf(&[0; 9]).unwrap(), Pmf::from([(0, 1.0)]));
    assert!(empirical_pmf(&[]).is_err());
}

#[test]
fn tv_to_poisson_examples() {
    let truncated: Pmf = (0..=50).map(|k| (k, poisson_pmf(1.1, k).unwrap())).collect();
    assert!(tv_distance_to_poisson(&truncated, 1.1).unwrap() < 1e-12);
    let point = Pmf::from([(0, 1.0)]);
    assert_eq!(tv_distance_to_poisson(&point, 0.0).unwrap(), 0.0);
    let half = tv_distance_to_poisson(&point, std::f64::consts::LN_2).unwrap();
    assert!((half - 0.5).abs() < 1e-15);
}

#[test]
fn binomial_to_poisson_distance_matches_exact_summation() {
    let binom = binomial_reference_pmf(200, 1.1 / 200.0).unwrap();
    let got = tv_distance_to_poisson(&binom, 1.1).unwrap();
    assert!((got - TV_BINOMIAL_200).abs() < 1e-13);

    let b = binomial_terms(200, 1.1 / 200.0);
    let pois = poisson_terms(1.1, 400);
    let mut l1: f64 = (0..=200).map(|k| (b[k] - pois[k]).abs()).sum();
    l1 += pois[201..].iter().sum::<f64>();
    assert!((got - 0.5 * l1).abs() < 1e-13);
    assert!(got < 0.01);
}

#[test]
fn binomial_reference_small_cases() {
    assert_eq!(binomial_reference_pmf(10, 0.0).unwrap(), Pmf::from([(0, 1.0)]));
    let pmf = binomial_reference_pmf(1, 0.3).unwrap();
    assert!((pmf[&0] - 0.7).abs() < 1e-15 && (pmf[&1] - 0.3).abs() < 1e-15);
    let direct = binomial_terms(30, 0.2);
    let pmf = binomial_reference_pmf(30, 0.2).unwrap();
    for (k, v) in direct.iter().enumerate() {
        assert!((pmf.get(&(k as u64)).copied().unwrap_or(0.0) - v).abs() < 1e-15);
    }
}

#[test]
fn binomial_reference_normalised_up_to_ten_thousand() {
    for &(n, q) in &[(10u64, 0.5), (1000, 0.001), (5000, 0.3), (10_000, 1.1e-4), (10_000, 0.5)] {
        let total: f64 = binomial_reference_pmf(n, q).unwrap().values().sum();
        assert!((total - 1.0).abs() < 1e-12, "n={n} q={q}");
    }
}

#[test]
fn seeded_poisson_sample_is_close_in_tv() {
    let mut r = rng(31);
    let dist = Poisson::new(1.1).unwrap();
    let draws: Vec<u64> = (0..10_000).map(|_| dist.sample(&mut r) as u64).collect();
    let tv = tv_distance_to_poisson(&empirical_pmf(&draws).unwrap(), 1.1).unwrap();
    assert!(tv < 0.03, "tv {tv}");
}

#[test]
fn wilson_examples() {
    let all = success_probability(&[0; 100]).unwrap();
    assert_eq!(all.p_hat, 1.0);
    assert!((all.ci_lo - 0.963).abs() < 5e-4);
    assert_eq!(all.ci_hi, 1.0);
    assert_eq!(success_probability(&[1, 2, 3]).unwrap().p_hat, 0.0);
    let half = wilson_interval(200, 400, Z_95).unwrap();
    assert_eq!(half.p_hat, 0.5);
    assert!((half.ci_hi - half.ci_lo - 0.098).abs() < 1e-3);
}

#[test]
fn correlation_examples() {
    let mut r = rng(5);
    let rows: Vec<Vec<bool>> = (0..10_000)
        .map(|_| (0..20).map(|_| r.random_bool(0.005)).collect())
        .collect();
    assert!(pairwise_error_correlation(&rows).unwrap().abs() < 0.03);

    let dup: Vec<Vec<bool>> = (0..100).map(|t| vec![t % 3 == 0, t % 3 == 0]).collect();
    assert!((pairwise_error_correlation(&dup).unwrap() - 1.0).abs() < 1e-12);
    let comp: Vec<Vec<bool>> = (0..100).map(|t| vec![t % 4 == 0, t % 4 != 0]).collect();
    assert!((pairwise_error_correlation(&comp).unwrap() + 1.0).abs() < 1e-12);
    let constant: Vec<Vec<bool>> = vec![vec![false, false]; 100];
    assert!(pairwise_error_correlation(&constant).is_err());
}

#[test]
fn ks_distance_detects_scale() {
    let mut r = rng(77);
    let normal = Normal::new(0.0, 0.7).unwrap();
    let samples: Vec<f64> = (0..4000).map(|_| normal.sample(&mut r)).collect();
    assert!(ks_distance_to_normal(&samples, 0.7).unwrap() < 0.03);
    assert!(ks_distance_to_normal(&samples, 1.4).unwrap() > 0.15);
}

fn double_loop_tv(a: &Pmf, b: &Pmf) -> f64 {
    let support: BTreeSet<u64> = a.keys().chain(b.keys()).copied().collect();
    let mut total = 0.0;
    for k in support {
        let pa = a.get(&k).copied().unwrap_or(0.0);
        let pb = b.get(&k).copied().unwrap_or(0.0);
        total += (pa - pb).abs();
    }
    0.5 * total
}

proptest! {
    #[test]
    fn tv_matches_direct_half_l1(xs in prop::collection::vec(0u64..8, 1..40),
                                 ys in prop::collection::vec(0u64..8, 1..40)) {
        let (a, b) = (empirical_pmf(&xs).unwrap(), empirical_pmf(&ys).unwrap());
        let tv = tv_distance(&a, &b).unwrap();
        prop_assert!((tv - double_loop_tv(&a, &b)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&tv));
        prop_assert!((tv - tv_distance(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn tv_to_poisson_matches_explicit_sum(xs in prop::collection::vec(0u64..12, 1..60),
                                          lambda in 0.05f64..6.0) {
        let pmf = empirical_pmf(&xs).unwrap();
        let pois = poisson_terms(lambda, 200);
        let mut l1 = 0.0;
        for (k, pk) in pois.iter().enumerate() {
            l1 += (pmf.get(&(k as u64)).copied().unwrap_or(0.0) - pk).abs();
        }
        let got = tv_distance_to_poisson(&pmf, lambda).unwrap();
        prop_assert!((got - 0.5 * l1).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn pmf_distance_ignores_order(mut xs in prop::collection::vec(0u64..20, 1..80),
                                  lambda in 0.1f64..5.0) {
        let before = tv_distance_to_poisson(&empirical_pmf(&xs).unwrap(), lambda).unwrap();
        xs.reverse();
        let shift = xs.len() / 3;
        xs.rotate_left(shift);
        let after = tv_distance_to_poisson(&empirical_pmf(&xs).unwrap(), lambda).unwrap();
        prop_assert_eq!(before.to_bits(), after.to_bits());
        let total: f64 = empirical_pmf(&xs).unwrap().values().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_contains_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
        let successes = (frac * trials as f64).round() as u64;
        let est = wilson_interval(successes, trials, Z_95).unwrap();
        prop_assert!(0.0 <= est.ci_lo && est.ci_lo <= est.p_hat);
        prop_assert!(est.p_hat <= est.ci_hi && est.ci_hi <= 1.0);
    }
}
