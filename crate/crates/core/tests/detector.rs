mod common;

use common::{integrate, tail_by_quadrature};
use hqkd_core::detector::{
    detector_curves, erlang_cdf, pz_given_n, sample_z, tail_prob, Threshold,
};
use hqkd_core::montecarlo::batch_rng;
use proptest::prelude::*;
use statrs::function::gamma::gamma_ur;

fn t(x: f64) -> Threshold {
    Threshold::new(x).unwrap()
}

#[test]
fn densities_normalize() {
    for n in 0..=20u32 {
        let f = |z: f64| pz_given_n(z, n).unwrap();
        let total = integrate(&f, 0.0, 40.0 + 10.0 * n as f64, 1e-12);
        assert!((total - 1.0).abs() < 1e-9, "n = {n}: {total}");
    }
}

#[test]
fn tail_matches_quadrature() {
    for n in 0..=20u32 {
        for i in 0..=40 {
            let tau = i as f64 * 0.5;
            let closed = tail_prob(n, t(tau));
            let quad = tail_by_quadrature(n, tau);
            assert!((closed - quad).abs() < 1e-9, "n = {n}, tau = {tau}: {closed} vs {quad}");
        }
    }
}

#[test]
fn tail_matches_incomplete_gamma() {
    for n in 0..=30u32 {
        for i in 1..=60 {
            let tau = i as f64 * 0.5;
            let reference = gamma_ur(n as f64 + 1.0, tau);
            assert!((tail_prob(n, t(tau)) - reference).abs() < 1e-12, "n = {n}, tau = {tau}");
        }
    }
}

#[test]
fn ratio_is_tau_plus_one() {
    let grid: Vec<Threshold> = (0..=1000).map(|i| t(i as f64 * 0.01)).collect();
    for p in detector_curves(&grid) {
        assert_eq!(p.ratio, p.tau.value() + 1.0);
        assert!((p.eta_d / p.upsilon_d - p.ratio).abs() <= 4.0 * f64::EPSILON * p.ratio);
        assert!(p.eta_d >= p.upsilon_d);
    }
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            f64::max(f - i as f64 / n, (i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn sampled_z_follows_erlang_cdf() {
    const N: usize = 1_000_000;
    let mut rng = batch_rng(2024, 0);
    let xs: Vec<f64> = (0..N).map(|_| sample_z(1, &mut rng).value()).collect();
    let d = ks_statistic(xs, |z| erlang_cdf(1, z).unwrap());
    assert!(d < 0.002, "KS = {d}");
    assert!(d < 1.63 / (N as f64).sqrt(), "KS = {d}");
}

#[test]
fn sampled_z_mean_is_n_plus_one() {
    const N: usize = 1_000_000;
    for n in [0u32, 1, 2, 5] {
        let mut rng = batch_rng(77, n as u64);
        let mean = (0..N).map(|_| sample_z(n, &mut rng).value()).sum::<f64>() / N as f64;
        let target = n as f64 + 1.0;
        assert!((mean - target).abs() < 3.0 * (target / N as f64).sqrt(), "n = {n}: {mean}");
    }
}

proptest! {
    #[test]
    fn tail_is_monotone(n in 0u32..40, tau in 0.0f64..40.0, dt in 0.0f64..5.0) {
        prop_assert!(tail_prob(n + 1, t(tau)) >= tail_prob(n, t(tau)));
        prop_assert!(tail_prob(n, t(tau + dt)) <= tail_prob(n, t(tau)) + 1e-15);
    }

    #[test]
    fn ratio_identity_holds_everywhere(tau in 0.0f64..200.0) {
        let p = detector_curves(&[t(tau)])[0];
        prop_assert_eq!(p.ratio, tau + 1.0);
    }
}
