//! Secret-key rates.
//!
//! Three analyses are provided:
//!
//! * the standard single-photon BB84 rate `Q [1 - 2 H2(E)]`, fed with the
//!   squashed statistics where double clicks get a random bit;
//! * the improved rate that treats vacuum noise in the detectors as trusted:
//!   privacy amplification is charged on an upper bound of the QBER that
//!   ideal non-demolition detectors placed in front of the real ones would
//!   have seen, while error correction is charged on the measured QBER;
//! * the same rate with Eve's information on the real bits bounded more
//!   tightly by pushing her virtual-bit error rate through the detector map.
//!
//! Multi-photon signals at Bob only ever enter `Q` and `E`; nothing but the
//! vacuum and single-photon gains is credited to the secret term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::{dark_count, Threshold};
use crate::error::{Error, Result};
use crate::protocol::{
    h2, honest_gain_qber, independent_event_probs_misaligned, DetectionMode, Scenario,
};

/// QBER of vacuum-triggered events; both detectors fire symmetrically.
pub const E10: f64 = 0.5;

/// Rounding allowed outside `[0, 0.5]` before a bound counts as clamped.
const CLAMP_SLACK: f64 = 1e-12;

/// Bisection tolerance when inverting the binary entropy.
pub const H2_INVERSE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Standard,
    Improved,
    ImprovedTight,
}

impl Analysis {
    pub fn as_str(self) -> &'static str {
        match self {
            Analysis::Standard => "standard",
            Analysis::Improved => "improved",
            Analysis::ImprovedTight => "improved-tight",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Analysis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Analysis::Standard),
            "improved" => Ok(Analysis::Improved),
            "improved-tight" | "tight" => Ok(Analysis::ImprovedTight),
            other => Err(Error::domain(format!("unknown analysis '{other}'"))),
        }
    }
}

/// Yields and QBERs for zero and one photon arriving at Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldSet {
    pub y10: f64,
    pub y11: f64,
    pub e10: f64,
    pub e11: f64,
}

/// A QBER bound after clamping into `[0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampedQber {
    pub value: f64,
    /// The value before clamping.
    pub raw: f64,
}

impl ClampedQber {
    fn new(raw: f64) -> Self {
        ClampedQber {
            value: raw.clamp(0.0, 0.5),
            raw,
        }
    }

    /// True when the raw value left `[0, 0.5]` by more than rounding, i.e.
    /// the observed statistics are inconsistent with the model.
    pub fn was_clamped(&self) -> bool {
        (self.raw - self.value).abs() > CLAMP_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateBreakdown {
    pub q: f64,
    pub e: f64,
    pub q10: f64,
    pub q11: f64,
    /// Upper bound on the single-photon QBER the ideal virtual detectors see.
    pub e11_upper_virtual: f64,
    pub eve_info: f64,
    pub ec_cost: f64,
    pub rate: f64,
    /// Set when one of the QBER bounds had to be clamped.
    pub inconsistent: bool,
}

/// Eve's error rates on the virtual and the real bits, and her information
/// on the real bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EveBound {
    pub e_v_eb: f64,
    pub e_eb: f64,
    pub info: f64,
}

/// What Bob observes: overall gain and QBER plus the reconstructed
/// probabilities of zero and one photon arriving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedStats {
    pub q: f64,
    pub e: f64,
    pub p10: f64,
    pub p11: f64,
}

impl ObservedStats {
    /// Statistics of the honest pure-loss channel with misalignment.
    pub fn honest(scenario: &Scenario) -> Result<Self> {
        let eta = scenario.eta_ch();
        let (q, e) = honest_gain_qber(scenario)?;
        Ok(ObservedStats {
            q,
            e,
            p10: 1.0 - eta,
            p11: eta,
        })
    }
}

/// `Q [1 - 2 H2(E)]`; may be negative.
pub fn keyrate_standard(q: f64, e: f64) -> f64 {
    q * (1.0 - 2.0 * h2(e))
}

fn require_positive_tau(tau: Threshold, what: &'static str) -> Result<()> {
    if tau.value() <= 0.0 {
        return Err(Error::DegenerateThreshold(what));
    }
    Ok(())
}

fn check_qber(name: &str, e: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&e) {
        return Err(Error::domain(format!("{name} must lie in [0, 0.5], got {e}")));
    }
    Ok(())
}

/// Single-click yield for vacuum at Bob: `2(1 - e^{-tau}) e^{-tau}`.
fn y10_independent(tau: Threshold) -> f64 {
    let e = dark_count(tau);
    2.0 * (1.0 - e) * e
}

/// Single-click yield for one photon at Bob: `(tau + 2)e^{-tau} - 2(tau + 1)e^{-2tau}`.
fn y11_independent(tau: Threshold) -> f64 {
    let e = dark_count(tau);
    let t = tau.value();
    (t + 2.0) * e - 2.0 * (t + 1.0) * e * e
}

/// Independent-mode yields; `e11` is the real-bit QBER when the virtual
/// detectors err with rate `e_virtual`.
pub fn yields_independent(tau: Threshold, e_virtual: f64) -> Result<YieldSet> {
    require_positive_tau(tau, "independent-mode yields")?;
    Ok(YieldSet {
        y10: y10_independent(tau),
        y11: y11_independent(tau),
        e10: E10,
        e11: e11_map(e_virtual, tau, DetectionMode::Independent)?,
    })
}

/// Yields for any mode. Differential mode always outputs a bit; ideal
/// detectors never fire on vacuum.
pub fn yields(mode: DetectionMode, tau: Threshold, e_virtual: f64) -> Result<YieldSet> {
    match mode {
        DetectionMode::Independent => yields_independent(tau, e_virtual),
        DetectionMode::Differential | DetectionMode::PerfectSpd => Ok(YieldSet {
            y10: if mode == DetectionMode::Differential { 1.0 } else { 0.0 },
            y11: 1.0,
            e10: E10,
            e11: e11_map(e_virtual, tau, mode)?,
        }),
    }
}

/// Real-bit QBER of single-photon events given the virtual-detector QBER.
pub fn e11_map(e_virtual: f64, tau: Threshold, mode: DetectionMode) -> Result<f64> {
    check_qber("virtual QBER", e_virtual)?;
    Ok(match mode {
        DetectionMode::Independent => {
            require_positive_tau(tau, "the single-photon QBER map")?;
            let e = dark_count(tau);
            let t = tau.value();
            ((e_virtual * t + 1.0) * e - (t + 1.0) * e * e) / y11_independent(tau)
        }
        DetectionMode::Differential => 0.25 + 0.5 * e_virtual,
        DetectionMode::PerfectSpd => e_virtual,
    })
}

/// Inverse of [`e11_map`], clamped into `[0, 0.5]`.
pub fn e11_invert(observed: f64, tau: Threshold, mode: DetectionMode) -> Result<ClampedQber> {
    if !observed.is_finite() {
        return Err(Error::domain(format!("observed QBER bound is {observed}")));
    }
    let raw = match mode {
        DetectionMode::Independent => {
            require_positive_tau(tau, "inverting the single-photon QBER map")?;
            let e = dark_count(tau);
            let t = tau.value();
            (observed * y11_independent(tau) - e + (t + 1.0) * e * e) / (t * e)
        }
        DetectionMode::Differential => 2.0 * (observed - 0.25),
        DetectionMode::PerfectSpd => observed,
    };
    Ok(ClampedQber::new(raw))
}

/// Upper bound on the single-photon QBER, `(QE - Q10/2) / Q11`.
pub fn e11_upper_bound(q: f64, e: f64, q10: f64, q11: f64) -> Result<ClampedQber> {
    if q11.is_nan() || q11 <= 0.0 {
        return Err(Error::NoSinglePhotonEvents);
    }
    Ok(ClampedQber::new((q * e - q10 * E10) / q11))
}

/// Inverse of `H2` on `[0, 0.5]` by bisection.
pub fn h2_inverse(h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::domain(format!("entropy must lie in [0, 1], got {h}")));
    }
    if h == 0.0 {
        return Ok(0.0);
    }
    if h == 1.0 {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    while hi - lo > H2_INVERSE_TOL {
        let mid = 0.5 * (lo + hi);
        if h2(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tighter bound on Eve's information about Bob's real bits.
///
/// Her error rate on the virtual bits is at least the solution of
/// `1 - H2(x) = H2(e_uxv)`; the detector noise then maps it onto the real
/// bits with the same map that takes the virtual QBER to the real one.
pub fn eve_info_tight(e_uxv: f64, tau: Threshold, mode: DetectionMode) -> Result<EveBound> {
    check_qber("e_uxv", e_uxv)?;
    let e_v_eb = h2_inverse(1.0 - h2(e_uxv))?;
    let e_eb = e11_map(e_v_eb, tau, mode)?;
    Ok(EveBound {
        e_v_eb,
        e_eb,
        info: 1.0 - h2(e_eb),
    })
}

/// Improved key rate from observed statistics.
pub fn keyrate_improved(
    scenario: &Scenario,
    stats: &ObservedStats,
    tight: bool,
) -> Result<KeyRateBreakdown> {
    let mode = scenario.mode;
    let tau = scenario.tau;
    let y = yields(mode, tau, 0.0)?;
    let q10 = stats.p10 * y.y10;
    let q11 = stats.p11 * y.y11;
    let e11_bound = e11_upper_bound(stats.q, stats.e, q10, q11)?;
    let e_uxv = e11_invert(e11_bound.value, tau, mode)?;
    let eve_info = if tight {
        eve_info_tight(e_uxv.value, tau, mode)?.info
    } else {
        h2(e_uxv.value)
    };
    let ec_cost = scenario.f_ec * stats.q * h2(stats.e);
    Ok(KeyRateBreakdown {
        q: stats.q,
        e: stats.e,
        q10,
        q11,
        e11_upper_virtual: e_uxv.value,
        eve_info,
        ec_cost,
        rate: q10 + q11 * (1.0 - eve_info) - ec_cost,
        inconsistent: e11_bound.was_clamped() || e_uxv.was_clamped(),
    })
}

/// Improved key rate for the honest channel of `scenario`.
pub fn keyrate_improved_honest(scenario: &Scenario, tight: bool) -> Result<KeyRateBreakdown> {
    keyrate_improved(scenario, &ObservedStats::honest(scenario)?, tight)
}

/// Standard-analysis rate for a scenario: squashed statistics in
/// independent mode, the raw `Q`, `E` otherwise.
pub fn keyrate_standard_scenario(scenario: &Scenario) -> Result<(f64, f64, f64)> {
    let (q, e) = match scenario.mode {
        DetectionMode::Independent => {
            independent_event_probs_misaligned(scenario.eta_ch(), scenario.e_d, scenario.tau)?
                .squashed()?
        }
        _ => honest_gain_qber(scenario)?,
    };
    Ok((keyrate_standard(q, e), q, e))
}
