//! Statistics of the conjugate homodyne detector operated as a photon counter.
//!
//! The detector reports the observable `Z = X² + P²` of two conjugate
//! quadratures. Given a Fock state `|n⟩` at the input, `Z` is Erlang
//! distributed with shape `n + 1` and unit rate; a threshold `tau` turns the
//! continuous outcome into a click.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this photon number densities are evaluated in log space.
const DIRECT_EVAL_MAX_N: u32 = 20;

/// Absolute tolerance on the normalization of a photon-number distribution.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Detection threshold on `Z`, in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub const ZERO: Threshold = Threshold(0.0);

    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::domain(format!(
                "threshold must be finite and >= 0, got {tau}"
            )));
        }
        Ok(Threshold(tau))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = Error;
    fn try_from(tau: f64) -> Result<Self> {
        Threshold::new(tau)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// One measured value of `Z`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ZOutcome(f64);

impl ZOutcome {
    pub fn new(z: f64) -> Result<Self> {
        if !z.is_finite() || z < 0.0 {
            return Err(Error::domain(format!("z must be finite and >= 0, got {z}")));
        }
        Ok(ZOutcome(z))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Diagonal of a density matrix in the Fock basis, truncated at `n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
}

impl PhotonNumberDistribution {
    /// Validates nonnegativity, `n_max >= 1` and normalization to 1e-12.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Invariant(format!(
                "photon-number distribution needs n_max >= 1, got {} entries",
                probs.len()
            )));
        }
        if let Some((n, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::Invariant(format!("P_{n} = {p} is not a probability")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Invariant(format!(
                "photon-number distribution sums to {total}, expected 1"
            )));
        }
        Ok(PhotonNumberDistribution { probs })
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Invariant(format!("weights sum to {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn point_mass(n: usize, n_max: usize) -> Result<Self> {
        if n > n_max {
            return Err(Error::domain(format!("n = {n} exceeds n_max = {n_max}")));
        }
        let mut probs = vec![0.0; n_max.max(1) + 1];
        probs[n] = 1.0;
        Self::new(probs)
    }

    pub fn uniform(n_max: usize) -> Result<Self> {
        let len = n_max + 1;
        Self::new(vec![1.0 / len as f64; len])
    }

    /// A single photon through a pure-loss channel: `(1 - eta, eta, 0, ...)`.
    pub fn lossy_single_photon(eta_ch: f64, n_max: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta_ch) {
            return Err(Error::domain(format!("eta_ch must lie in [0, 1], got {eta_ch}")));
        }
        let mut probs = vec![0.0; n_max.max(1) + 1];
        probs[0] = 1.0 - eta_ch;
        probs[1] = eta_ch;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Total-variation distance; the shorter vector is zero-padded.
    pub fn tv_distance(&self, other: &PhotonNumberDistribution) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        0.5 * (0..len).map(|n| (self.get(n) - other.get(n)).abs()).sum::<f64>()
    }
}

/// Efficiency, dark-count probability and their ratio at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorCurvePoint {
    pub tau: Threshold,
    pub eta_d: f64,
    pub upsilon_d: f64,
    pub ratio: f64,
}

pub(crate) fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn check_z(z: f64) -> Result<()> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::domain(format!("z must be finite and >= 0, got {z}")));
    }
    Ok(())
}

/// Density of `Z` given an `n`-photon Fock state: `e^{-z} z^n / n!`.
pub fn pz_given_n(z: f64, n: u32) -> Result<f64> {
    check_z(z)?;
    Ok(pz_given_n_unchecked(z, n))
}

pub(crate) fn pz_given_n_unchecked(z: f64, n: u32) -> f64 {
    if n == 0 {
        return (-z).exp();
    }
    if z == 0.0 {
        return 0.0;
    }
    if n <= DIRECT_EVAL_MAX_N {
        let mut term = 1.0;
        for k in 1..=n {
            term *= z / k as f64;
        }
        (-z).exp() * term
    } else {
        (-z + n as f64 * z.ln() - ln_factorial(n)).exp()
    }
}

/// Density of `Z` for a mixture of Fock states.
pub fn pz_mixture(dist: &PhotonNumberDistribution, z: f64) -> Result<f64> {
    check_z(z)?;
    Ok(dist
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(n, p)| p * pz_given_n_unchecked(z, n as u32))
        .sum())
}

/// `P(Z > tau | n)`, the regularized upper incomplete gamma `Q(n + 1, tau)`.
///
/// Evaluated as the finite Poisson sum `e^{-tau} Σ_{k<=n} tau^k / k!`.
pub fn tail_prob(n: u32, tau: Threshold) -> f64 {
    let tau = tau.value();
    if tau == 0.0 {
        return 1.0;
    }
    let lead = (-tau).exp();
    let sum = if lead > 0.0 {
        let mut term = lead;
        let mut acc = lead;
        for k in 1..=n {
            term *= tau / k as f64;
            acc += term;
        }
        acc
    } else {
        let ln_tau = tau.ln();
        (0..=n)
            .map(|k| (-tau + k as f64 * ln_tau - ln_factorial(k)).exp())
            .sum()
    };
    sum.min(1.0)
}

/// `P(Z <= z | n)`.
pub fn erlang_cdf(n: u32, z: f64) -> Result<f64> {
    check_z(z)?;
    Ok(1.0 - tail_prob(n, Threshold(z)))
}

/// Single-photon detection efficiency `e^{-tau}(tau + 1)`.
pub fn efficiency(tau: Threshold) -> f64 {
    tail_prob(1, tau)
}

/// Dark-count probability `e^{-tau}`.
pub fn dark_count(tau: Threshold) -> f64 {
    tail_prob(0, tau)
}

pub fn detector_curves(tau_grid: &[Threshold]) -> Vec<DetectorCurvePoint> {
    tau_grid
        .iter()
        .map(|&tau| DetectorCurvePoint {
            tau,
            eta_d: efficiency(tau),
            upsilon_d: dark_count(tau),
            ratio: tau.value() + 1.0,
        })
        .collect()
}

/// Draws `Z` for an `n`-photon input as `-ln(u_0 · ... · u_n)`.
pub fn sample_z<R: Rng + ?Sized>(n: u32, rng: &mut R) -> ZOutcome {
    let mut product = 1.0_f64;
    let mut log_acc = 0.0_f64;
    for _ in 0..=n {
        // (0, 1]: keeps ln finite
        let u = 1.0 - rng.gen::<f64>();
        product *= u;
        if product < 1e-250 {
            log_acc += product.ln();
            product = 1.0;
        }
    }
    ZOutcome(-(log_acc + product.ln()))
}

/// Click iff `z > tau`; a tie is a no-click.
#[inline]
pub fn click_map(z: ZOutcome, tau: Threshold) -> bool {
    z.value() > tau.value()
}
