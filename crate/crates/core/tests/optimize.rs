use hqkd_core::detector::Threshold;
use hqkd_core::optimize::{
    find_tau_jump, linear_grid, optimize_tau, run_sweep, zero_crossing, Objective, SweepConfig,
    TauChoice, TauSearch,
};
use hqkd_core::protocol::{channel_transmittance, DetectionMode, Scenario};
use hqkd_core::Error;
use proptest::prelude::*;

fn config(mode: DetectionMode, e_d: f64, objective: Objective, lengths: Vec<f64>) -> SweepConfig {
    SweepConfig {
        scenario: Scenario::fiber(0.0, e_d, mode, Threshold::new(1.0).unwrap()).unwrap(),
        objective,
        lengths_km: lengths,
        tau: TauChoice::Optimize(TauSearch::default()),
    }
}

#[test]
fn concave_toy_objective() {
    let opt = optimize_tau(|t| Ok(-(t - 2.0) * (t - 2.0)), 0.001, 10.0, 0.01).unwrap();
    assert!((opt.tau - 2.0).abs() < 1e-6);
    assert_eq!(opt.local_optima.len(), 1);
}

#[test]
fn bimodal_objective_reports_both_peaks() {
    let f = |t: f64| Ok((-(t - 1.0).powi(2)).exp() + 1.5 * (-(t - 6.0).powi(2)).exp());
    let opt = optimize_tau(f, 0.001, 10.0, 0.05).unwrap();
    assert_eq!(opt.local_optima.len(), 2);
    assert!((opt.tau - 6.0).abs() < 1e-3);
}

#[test]
fn non_finite_objective_is_an_evaluation_error() {
    let err = optimize_tau(|t| Ok(if t > 5.0 { f64::NAN } else { t }), 0.001, 10.0, 0.1).unwrap_err();
    assert!(matches!(err, Error::Evaluation { .. }), "{err:?}");
}

#[test]
fn perfect_spd_rate_is_transmittance() {
    let lengths = linear_grid(0.0, 100.0, 5.0).unwrap();
    for objective in [Objective::StandardRate, Objective::ImprovedRate, Objective::MutualInfo] {
        for r in run_sweep(&config(DetectionMode::PerfectSpd, 0.0, objective, lengths.clone())).unwrap() {
            let eta = channel_transmittance(0.2, r.length_km).unwrap();
            assert!((r.objective_value - eta).abs() < 1e-15, "{objective} at {} km", r.length_km);
            assert_eq!(r.tau_opt, None);
        }
    }
}

#[test]
fn differential_sweep_has_no_threshold() {
    let rows = run_sweep(&config(DetectionMode::Differential, 0.0, Objective::ImprovedRate, vec![0.0, 10.0])).unwrap();
    assert!(rows.iter().all(|r| r.tau_opt.is_none() && r.local_optima.is_empty()));
}

#[test]
fn improved_rate_at_zero_length() {
    let rows = run_sweep(&config(DetectionMode::Independent, 0.0, Objective::ImprovedRate, vec![0.0])).unwrap();
    assert!((rows[0].objective_value - 0.19).abs() < 0.01);
}

#[test]
fn two_optima_near_eight_km() {
    let rows = run_sweep(&config(
        DetectionMode::Independent,
        0.05,
        Objective::ImprovedRate,
        linear_grid(6.0, 10.0, 0.1).unwrap(),
    ))
    .unwrap();
    let near: Vec<_> = rows.iter().filter(|r| (7.5..=9.0).contains(&r.length_km)).collect();
    assert!(near.iter().all(|r| r.local_optima.len() == 2));
    let jump = find_tau_jump(&rows, 10.0).unwrap();
    assert!((jump.location_km() - 8.15).abs() < 0.11, "{jump:?}");
}

#[test]
fn rows_report_the_objective_at_their_threshold() {
    let rows = run_sweep(&config(DetectionMode::Independent, 0.01, Objective::ImprovedTightRate, vec![0.0, 3.0, 12.0])).unwrap();
    for r in rows {
        let best = r.local_optima.iter().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.objective_value, best);
        assert_eq!(r.point.value, r.objective_value);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = config(DetectionMode::Independent, 0.0, Objective::ImprovedRate, vec![]);
    assert!(run_sweep(&c).is_err());
    c.lengths_km = vec![1.0, 1.0];
    assert!(run_sweep(&c).is_err());
    c.lengths_km = vec![1.0];
    c.tau = TauChoice::Optimize(TauSearch { min: 0.0, max: 5.0, step: 0.1 });
    assert!(matches!(run_sweep(&c), Err(Error::DegenerateThreshold(_))));
}

#[test]
fn crossing_interpolates() {
    let mut rows = run_sweep(&config(DetectionMode::PerfectSpd, 0.0, Objective::StandardRate, vec![0.0, 1.0])).unwrap();
    rows[0].objective_value = 1.0;
    rows[1].objective_value = -3.0;
    assert_eq!(zero_crossing(&rows), Some(0.25));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn grid_max_is_never_beaten_by_a_grid_point(c in 0.5f64..9.5, w in 0.2f64..3.0) {
        let f = |t: f64| -((t - c) / w).powi(2) + (3.0 * t).sin() * 0.1;
        let opt = optimize_tau(|t| Ok(f(t)), 0.001, 10.0, 0.01).unwrap();
        for t in linear_grid(0.001, 10.0, 0.01).unwrap() {
            prop_assert!(f(t) <= opt.value + 1e-12);
        }
    }
}
