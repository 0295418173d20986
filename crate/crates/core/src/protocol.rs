//! Channel, scenario and the two detection-mode front ends.
//!
//! Alice sends a perfect single photon; the channel is pure loss plus a
//! polarization misalignment that routes a surviving photon to the wrong
//! detector with probability `e_d`. All closed forms below are written for
//! Alice sending bit 0; by symmetry they hold for bit 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::{dark_count, Threshold};
use crate::error::{Error, Result};

/// Default fiber attenuation in dB/km.
pub const DEFAULT_GAMMA_DB_PER_KM: f64 = 0.2;

/// How Bob turns the two `Z` outcomes into a bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    /// Each detector is thresholded separately; single clicks give the bit.
    Independent,
    /// The larger of `z0`, `z1` gives the bit; no threshold is used.
    Differential,
    /// Ideal single-photon detectors (unit efficiency, no dark counts), the
    /// reference curve.
    PerfectSpd,
}

impl DetectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionMode::Independent => "independent",
            DetectionMode::Differential => "differential",
            DetectionMode::PerfectSpd => "perfect-spd",
        }
    }

    /// Whether the threshold influences this mode at all.
    pub fn uses_threshold(self) -> bool {
        matches!(self, DetectionMode::Independent)
    }
}

impl fmt::Display for DetectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(DetectionMode::Independent),
            "differential" => Ok(DetectionMode::Differential),
            "perfect-spd" | "spd" => Ok(DetectionMode::PerfectSpd),
            other => Err(Error::domain(format!("unknown detection mode '{other}'"))),
        }
    }
}

/// Source of the channel transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Channel {
    Fiber { gamma_db_per_km: f64, length_km: f64 },
    /// A transmittance given directly, including the `eta = 0` limit.
    Transmittance { eta_ch: f64 },
}

impl Channel {
    pub fn fiber(gamma_db_per_km: f64, length_km: f64) -> Result<Self> {
        channel_transmittance(gamma_db_per_km, length_km)?;
        Ok(Channel::Fiber {
            gamma_db_per_km,
            length_km,
        })
    }

    pub fn transmittance(eta_ch: f64) -> Result<Self> {
        check_probability("eta_ch", eta_ch)?;
        Ok(Channel::Transmittance { eta_ch })
    }

    pub fn eta_ch(&self) -> f64 {
        match *self {
            Channel::Fiber {
                gamma_db_per_km,
                length_km,
            } => fiber_loss(gamma_db_per_km, length_km),
            Channel::Transmittance { eta_ch } => eta_ch,
        }
    }

    pub fn length_km(&self) -> Option<f64> {
        match *self {
            Channel::Fiber { length_km, .. } => Some(length_km),
            Channel::Transmittance { .. } => None,
        }
    }
}

/// Everything needed to evaluate one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub channel: Channel,
    /// Misalignment QBER.
    pub e_d: f64,
    /// Error-correction efficiency.
    pub f_ec: f64,
    pub mode: DetectionMode,
    /// Ignored unless `mode` is [`DetectionMode::Independent`].
    pub tau: Threshold,
}

impl Scenario {
    pub fn new(
        channel: Channel,
        e_d: f64,
        f_ec: f64,
        mode: DetectionMode,
        tau: Threshold,
    ) -> Result<Self> {
        if !(0.0..=0.5).contains(&e_d) {
            return Err(Error::domain(format!(
                "misalignment e_d must lie in [0, 0.5], got {e_d}"
            )));
        }
        if !(f_ec.is_finite() && f_ec >= 1.0) {
            return Err(Error::domain(format!(
                "error-correction efficiency f must be >= 1, got {f_ec}"
            )));
        }
        Ok(Scenario {
            channel,
            e_d,
            f_ec,
            mode,
            tau,
        })
    }

    /// A fiber link with the default attenuation and `f = 1`.
    pub fn fiber(length_km: f64, e_d: f64, mode: DetectionMode, tau: Threshold) -> Result<Self> {
        Self::new(
            Channel::fiber(DEFAULT_GAMMA_DB_PER_KM, length_km)?,
            e_d,
            1.0,
            mode,
            tau,
        )
    }

    pub fn eta_ch(&self) -> f64 {
        self.channel.eta_ch()
    }

    pub fn with_tau(self, tau: Threshold) -> Self {
        Scenario { tau, ..self }
    }

    pub fn with_length(self, length_km: f64) -> Result<Self> {
        let gamma = match self.channel {
            Channel::Fiber {
                gamma_db_per_km, ..
            } => gamma_db_per_km,
            Channel::Transmittance { .. } => DEFAULT_GAMMA_DB_PER_KM,
        };
        Ok(Scenario {
            channel: Channel::fiber(gamma, length_km)?,
            ..self
        })
    }
}

/// Probabilities of the four independent-mode events plus sifted `Q`, `E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub p_none: f64,
    pub p_correct: f64,
    pub p_wrong: f64,
    pub p_double: f64,
    pub q_sifted: f64,
    pub qber: f64,
}

impl DetectionStats {
    fn from_events(p_none: f64, p_correct: f64, p_wrong: f64, p_double: f64) -> Self {
        let q_sifted = p_correct + p_wrong;
        let qber = if q_sifted > 0.0 { p_wrong / q_sifted } else { 0.5 };
        DetectionStats {
            p_none,
            p_correct,
            p_wrong,
            p_double,
            q_sifted,
            qber,
        }
    }

    /// Gain and QBER when double clicks are kept with a random bit.
    pub fn squashed(&self) -> Result<(f64, f64)> {
        // 1 - p_none cancels when clicks are rare
        let q = self.p_correct + self.p_wrong + self.p_double;
        if q <= 0.0 {
            return Err(Error::UndefinedQber);
        }
        Ok((q, (self.p_wrong + 0.5 * self.p_double) / q))
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn fiber_loss(gamma_db_per_km: f64, length_km: f64) -> f64 {
    10f64.powf(-gamma_db_per_km * length_km / 10.0)
}

/// `10^(-gamma L / 10)`.
pub fn channel_transmittance(gamma_db_per_km: f64, length_km: f64) -> Result<f64> {
    if !(gamma_db_per_km.is_finite() && gamma_db_per_km > 0.0) {
        return Err(Error::domain(format!(
            "attenuation must be > 0 dB/km, got {gamma_db_per_km}"
        )));
    }
    if !(length_km.is_finite() && length_km >= 0.0) {
        return Err(Error::domain(format!("length must be >= 0 km, got {length_km}")));
    }
    Ok(fiber_loss(gamma_db_per_km, length_km))
}

/// Click probability of a detector that receives one photon with
/// probability `p_photon` and vacuum otherwise: `(p tau + 1) e^{-tau}`.
fn click_prob(p_photon: f64, tau: Threshold) -> f64 {
    (p_photon * tau.value() + 1.0) * dark_count(tau)
}

/// Event probabilities with ideal polarization alignment.
pub fn independent_event_probs(eta_ch: f64, tau: Threshold) -> Result<DetectionStats> {
    independent_event_probs_misaligned(eta_ch, 0.0, tau)
}

/// Event probabilities when a surviving photon hits the wrong detector with
/// probability `e_d`.
///
/// The photon reaches at most one detector, so the two clicks are not
/// independent; the result is the mixture over the photon's destination.
pub fn independent_event_probs_misaligned(
    eta_ch: f64,
    e_d: f64,
    tau: Threshold,
) -> Result<DetectionStats> {
    check_probability("eta_ch", eta_ch)?;
    if !(0.0..=0.5).contains(&e_d) {
        return Err(Error::domain(format!("e_d must lie in [0, 0.5], got {e_d}")));
    }
    let dark = dark_count(tau);
    let signal = click_prob(1.0, tau);

    // (none, correct, wrong, double) when the correct detector gets
    // `a` photons and the wrong one gets `b`, each 0 or 1.
    let events = |a: f64, b: f64| {
        let c0 = if a > 0.0 { signal } else { dark };
        let c1 = if b > 0.0 { signal } else { dark };
        [
            (1.0 - c0) * (1.0 - c1),
            c0 * (1.0 - c1),
            (1.0 - c0) * c1,
            c0 * c1,
        ]
    };
    let w_vac = 1.0 - eta_ch;
    let w_right = eta_ch * (1.0 - e_d);
    let w_wrong = eta_ch * e_d;
    let (vac, right, wrong) = (events(0.0, 0.0), events(1.0, 0.0), events(0.0, 1.0));
    let p = |i: usize| w_vac * vac[i] + w_right * right[i] + w_wrong * wrong[i];
    Ok(DetectionStats::from_events(p(0), p(1), p(2), p(3)))
}

/// Closed-form gain and QBER when double clicks are kept with a random bit.
pub fn independent_squashed_stats(eta_ch: f64, tau: Threshold) -> Result<(f64, f64)> {
    independent_event_probs(eta_ch, tau)?.squashed()
}

/// Sifted gain `P_C + P_W` in closed form: `(eta tau + 2)e^{-tau} - 2(eta tau + 1)e^{-2tau}`.
pub fn independent_sifted_gain(eta_ch: f64, tau: Threshold) -> f64 {
    let e = dark_count(tau);
    let x = eta_ch * tau.value();
    (x + 2.0) * e - 2.0 * (x + 1.0) * e * e
}

/// Differential-mode error rate `1/2 - eta/4`; the gain is always 1.
pub fn differential_qber(eta_ch: f64) -> Result<f64> {
    differential_qber_misaligned(eta_ch, 0.0)
}

/// Differential-mode error rate with misalignment: a surviving photon gives
/// an error with probability `1/4 + e_d/2`.
pub fn differential_qber_misaligned(eta_ch: f64, e_d: f64) -> Result<f64> {
    check_probability("eta_ch", eta_ch)?;
    if !(0.0..=0.5).contains(&e_d) {
        return Err(Error::domain(format!("e_d must lie in [0, 0.5], got {e_d}")));
    }
    Ok((1.0 - eta_ch) * 0.5 + eta_ch * (0.25 + 0.5 * e_d))
}

/// Shannon binary entropy in bits; 0 at both endpoints.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("binary entropy needs x in [0, 1], got {x}")));
    }
    Ok(h2(x))
}

pub(crate) fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// `Q [1 - H2(E)]`.
pub fn mutual_information(q: f64, e: f64) -> f64 {
    q * (1.0 - h2(e))
}

/// Honest-channel gain and QBER for a scenario, as Bob would measure them.
///
/// Independent mode discards no-click and double-click events.
pub fn honest_gain_qber(scenario: &Scenario) -> Result<(f64, f64)> {
    let eta = scenario.eta_ch();
    match scenario.mode {
        DetectionMode::Independent => {
            let s = independent_event_probs_misaligned(eta, scenario.e_d, scenario.tau)?;
            Ok((s.q_sifted, s.qber))
        }
        DetectionMode::Differential => {
            Ok((1.0, differential_qber_misaligned(eta, scenario.e_d)?))
        }
        DetectionMode::PerfectSpd => Ok((eta, scenario.e_d)),
    }
}

/// Mutual information between Alice and Bob for the honest channel.
pub fn scenario_mutual_information(scenario: &Scenario) -> Result<f64> {
    let (q, e) = honest_gain_qber(scenario)?;
    Ok(mutual_information(q, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x: f64) -> Threshold {
        Threshold::new(x).unwrap()
    }

    #[test]
    fn transmittance_examples() {
        assert_eq!(channel_transmittance(0.2, 0.0).unwrap(), 1.0);
        assert!((channel_transmittance(0.2, 50.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((channel_transmittance(0.2, 100.0).unwrap() - 0.01).abs() < 1e-16);
        assert!(channel_transmittance(0.0, 1.0).is_err());
        assert!(channel_transmittance(0.2, -1.0).is_err());
    }

    #[test]
    fn zero_threshold_always_double_clicks() {
        let s = independent_event_probs(0.7, t(0.0)).unwrap();
        assert_eq!((s.p_none, s.p_correct, s.p_wrong, s.p_double), (0.0, 0.0, 0.0, 1.0));
        let (q, e) = independent_squashed_stats(0.7, t(0.0)).unwrap();
        assert_eq!((q, e), (1.0, 0.5));
    }

    #[test]
    fn vacuum_channel_is_symmetric() {
        for &x in &[0.2, 1.0, 3.0] {
            let s = independent_event_probs(0.0, t(x)).unwrap();
            let e = (-x).exp();
            assert!((s.p_correct - e * (1.0 - e)).abs() < 1e-15);
            assert_eq!(s.p_correct, s.p_wrong);
            assert_eq!(s.qber, 0.5);
            let (q, qber) = independent_squashed_stats(0.0, t(x)).unwrap();
            assert!((q - (2.0 * e - e * e)).abs() < 1e-15);
            assert!((qber - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn event_probs_match_closed_forms() {
        for &eta in &[0.0, 0.1, 0.5, 1.0] {
            for &x in &[0.1f64, 1.0, 4.0] {
                let e = (-x).exp();
                let s = independent_event_probs(eta, t(x)).unwrap();
                let d0 = (eta * x + 1.0) * e;
                assert!((s.p_none - (1.0 - d0) * (1.0 - e)).abs() < 1e-15);
                assert!((s.p_correct - d0 * (1.0 - e)).abs() < 1e-15);
                assert!((s.p_wrong - (1.0 - d0) * e).abs() < 1e-15);
                assert!((s.p_double - (eta * x + 1.0) * e * e).abs() < 1e-15);
                assert!((s.q_sifted - independent_sifted_gain(eta, t(x))).abs() < 1e-15);
                let expected_e = (e - (eta * x + 1.0) * e * e) / s.q_sifted;
                assert!((s.qber - expected_e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn squashed_closed_form() {
        let (eta, x) = (1.0, 1.0f64);
        let e = (-x).exp();
        let (q, qber) = independent_squashed_stats(eta, t(x)).unwrap();
        let q_expected = (eta * x + 2.0) * e - (eta * x + 1.0) * e * e;
        assert!((q - q_expected).abs() < 1e-15);
        assert!((qber - (e - 0.5 * (eta * x + 1.0) * e * e) / q_expected).abs() < 1e-15);
    }

    #[test]
    fn misalignment_half_scrambles_bits() {
        let s = independent_event_probs_misaligned(0.8, 0.5, t(1.2)).unwrap();
        assert!((s.p_correct - s.p_wrong).abs() < 1e-15);
    }

    #[test]
    fn differential_examples() {
        assert_eq!(differential_qber(1.0).unwrap(), 0.25);
        assert_eq!(differential_qber(0.0).unwrap(), 0.5);
        assert_eq!(differential_qber(0.5).unwrap(), 0.375);
        assert!(differential_qber(1.5).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.25).unwrap() - 0.811_278_124_459_132_8).abs() < 1e-15);
        assert!(binary_entropy(-0.01).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        assert_eq!(mutual_information(0.3, 0.0), 0.3);
        assert_eq!(mutual_information(0.9, 0.5), 0.0);
        let s = Scenario::fiber(0.0, 0.0, DetectionMode::Differential, Threshold::ZERO).unwrap();
        let i = scenario_mutual_information(&s).unwrap();
        assert!((i - 0.188_721_875_540_867_2).abs() < 1e-12);
    }

    #[test]
    fn scenario_validation() {
        let ch = Channel::fiber(0.2, 10.0).unwrap();
        assert!(Scenario::new(ch, 0.7, 1.0, DetectionMode::Independent, t(1.0)).is_err());
        assert!(Scenario::new(ch, 0.1, 0.9, DetectionMode::Independent, t(1.0)).is_err());
        assert!(Channel::transmittance(1.2).is_err());
        assert!("bogus".parse::<DetectionMode>().is_err());
        assert_eq!("perfect-spd".parse::<DetectionMode>().unwrap(), DetectionMode::PerfectSpd);
    }
}
