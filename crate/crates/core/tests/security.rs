mod common;

use hqkd_core::detector::Threshold;
use hqkd_core::protocol::{Channel, DetectionMode, Scenario};
use hqkd_core::security::{
    e11_invert, e11_map, e11_upper_bound, eve_info_tight, h2_inverse, keyrate_improved_honest,
    keyrate_standard, keyrate_standard_scenario, yields, yields_independent, ObservedStats,
};
use proptest::prelude::*;

fn t(x: f64) -> Threshold {
    Threshold::new(x).unwrap()
}

fn scenario(length_km: f64, e_d: f64, mode: DetectionMode, tau: f64) -> Scenario {
    Scenario::fiber(length_km, e_d, mode, t(tau)).unwrap()
}

#[test]
fn yields_at_unit_threshold() {
    let y = yields_independent(t(1.0), 0.0).unwrap();
    let e1 = (-1.0f64).exp();
    assert!((y.y10 - 2.0 * (1.0 - e1) * e1).abs() < 1e-15);
    assert!((y.y11 - (3.0 * e1 - 4.0 * e1 * e1)).abs() < 1e-15);
    assert!((y.e11 - 0.172_88).abs() < 5e-6);
    assert_eq!(y.e10, 0.5);
}

#[test]
fn yield_gap() {
    for i in 1..200 {
        let tau = i as f64 * 0.05;
        let y = yields_independent(t(tau), 0.0).unwrap();
        let e = (-tau).exp();
        assert!((y.y11 - y.y10 - tau * e * (1.0 - 2.0 * e)).abs() < 1e-14);
    }
}

#[test]
fn zero_threshold_is_degenerate() {
    assert!(yields_independent(t(0.0), 0.0).is_err());
    assert!(e11_map(0.1, t(0.0), DetectionMode::Independent).is_err());
}

#[test]
fn differential_and_ideal_maps() {
    assert_eq!(e11_map(0.1, t(1.0), DetectionMode::Differential).unwrap(), 0.3);
    assert_eq!(e11_map(0.0, t(1.0), DetectionMode::Differential).unwrap(), 0.25);
    assert_eq!(e11_map(0.1, t(1.0), DetectionMode::PerfectSpd).unwrap(), 0.1);
    let y = yields(DetectionMode::Differential, t(1.0), 0.0).unwrap();
    assert_eq!((y.y10, y.y11), (1.0, 1.0));
}

#[test]
fn full_scrambling_is_a_fixed_point() {
    for mode in [DetectionMode::Independent, DetectionMode::Differential] {
        for &tau in &[0.1, 1.0, 5.0] {
            assert!((e11_map(0.5, t(tau), mode).unwrap() - 0.5).abs() < 1e-12);
        }
    }
}

#[test]
fn honest_bound_recovers_true_single_photon_qber() {
    for mode in [DetectionMode::Independent, DetectionMode::Differential] {
        for &e_d in &[0.0, 0.01, 0.05] {
            for &l in &[0.0, 10.0, 40.0] {
                for &tau in &[0.3, 1.0, 4.0] {
                    let s = scenario(l, e_d, mode, tau);
                    let stats = ObservedStats::honest(&s).unwrap();
                    let y = yields(mode, s.tau, e_d).unwrap();
                    let bound = e11_upper_bound(stats.q, stats.e, stats.p10 * y.y10, stats.p11 * y.y11)
                        .unwrap();
                    assert!((bound.raw - y.e11).abs() < 1e-12, "{mode} {e_d} {l} {tau}");
                    let r = keyrate_improved_honest(&s, false).unwrap();
                    assert!((r.e11_upper_virtual - e_d).abs() < 1e-10);
                    assert!(!r.inconsistent);
                }
            }
        }
    }
}

#[test]
fn standard_differential_rate_is_never_positive() {
    for i in 0..=100 {
        let s = scenario(i as f64, 0.0, DetectionMode::Differential, 1.0);
        assert!(keyrate_standard_scenario(&s).unwrap().0 <= 0.0);
    }
}

#[test]
fn standard_rate_formula() {
    assert_eq!(keyrate_standard(0.5, 0.0), 0.5);
    assert!((keyrate_standard(1.0, 0.11) - (1.0 - 2.0 * common::h2(0.11))).abs() < 1e-15);
    assert!(keyrate_standard(1.0, 0.25) < 0.0);
}

#[test]
fn tight_bound_is_equal_without_misalignment() {
    for mode in [DetectionMode::Independent, DetectionMode::Differential] {
        let b = eve_info_tight(0.0, t(1.0), mode).unwrap();
        assert!((b.e_v_eb - 0.5).abs() < 1e-12);
        assert!((b.e_eb - 0.5).abs() < 1e-12);
        assert!(b.info.abs() < 1e-12);
    }
}

#[test]
fn tight_rate_dominates() {
    for mode in [DetectionMode::Independent, DetectionMode::Differential] {
        for &e_d in &[0.0, 0.01, 0.05] {
            for i in 0..=30 {
                let s = scenario(i as f64 * 2.0, e_d, mode, 0.8);
                let loose = keyrate_improved_honest(&s, false).unwrap();
                let tight = keyrate_improved_honest(&s, true).unwrap();
                assert!(tight.rate >= loose.rate - 1e-12);
            }
        }
    }
}

#[test]
fn h2_inverse_roundtrip() {
    for i in 0..=500 {
        let x = i as f64 * 0.001;
        let y = h2_inverse(common::h2(x)).unwrap();
        assert!((y - x).abs() < 1e-9, "{x} -> {y}");
    }
    assert!(h2_inverse(1.2).is_err());
}

#[test]
fn bound_without_single_photons_fails() {
    assert!(e11_upper_bound(0.5, 0.1, 0.1, 0.0).is_err());
}

#[test]
fn inconsistent_statistics_are_flagged() {
    let s = Scenario::new(Channel::transmittance(0.5).unwrap(), 0.0, 1.0, DetectionMode::Differential, t(1.0)).unwrap();
    let stats = ObservedStats { q: 1.0, e: 0.1, p10: 0.5, p11: 0.5 };
    let r = hqkd_core::security::keyrate_improved(&s, &stats, false).unwrap();
    assert!(r.inconsistent);
    assert_eq!(r.e11_upper_virtual, 0.0);
}

proptest! {
    #[test]
    fn map_is_increasing(tau in 0.01f64..20.0, a in 0.0f64..=0.5, b in 0.0f64..=0.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for mode in [DetectionMode::Independent, DetectionMode::Differential] {
            prop_assert!(e11_map(lo, t(tau), mode).unwrap() <= e11_map(hi, t(tau), mode).unwrap() + 1e-15);
        }
    }

    #[test]
    fn map_inverts(tau in 0.05f64..15.0, e in 0.0f64..=0.5) {
        for mode in [DetectionMode::Independent, DetectionMode::Differential] {
            let back = e11_invert(e11_map(e, t(tau), mode).unwrap(), t(tau), mode).unwrap();
            prop_assert!((back.raw - e).abs() < 1e-9, "{mode}: {e} -> {}", back.raw);
        }
    }

    #[test]
    fn tight_info_below_entropy(e in 0.0f64..=0.5, tau in 0.05f64..15.0) {
        for mode in [DetectionMode::Independent, DetectionMode::Differential] {
            let b = eve_info_tight(e, t(tau), mode).unwrap();
            prop_assert!(b.info <= common::h2(e) + 1e-9);
            prop_assert!(b.info >= 0.0);
        }
    }
}
