//! Photon-number reconstruction from a sample of `Z` outcomes.
//!
//! The density of `Z` is a mixture of Erlang(n + 1, 1) components weighted by
//! the photon-number distribution, so the weights are estimated by
//! expectation-maximization on that mixture. The `e^{-z}` factor is common
//! to all components and drops out of the responsibilities.

use serde::{Deserialize, Serialize};

use crate::detector::{ln_factorial, PhotonNumberDistribution};
use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;
pub const DEFAULT_N_MAX: usize = 10;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Samples per block of the E-step; block partials are combined pairwise.
const BLOCK: usize = 4096;

/// Relative slack allowed on the per-step log-likelihood increase.
const LL_SLACK: f64 = 1e-12;

/// A set of measured `Z` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSampleSet {
    samples: Vec<f64>,
}

impl ZSampleSet {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData {
                required: 1,
                actual: 0,
            });
        }
        if let Some(z) = samples.iter().find(|z| !z.is_finite() || **z < 0.0) {
            return Err(Error::domain(format!("sample z = {z} is not a valid Z outcome")));
        }
        Ok(ZSampleSet { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.samples) / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub estimate: PhotonNumberDistribution,
    pub iterations: usize,
    /// `max_n |P_n(t) - P_n(t-1)|` at the last step.
    pub final_delta: f64,
    /// Log-likelihood of the samples under `estimate`.
    pub log_likelihood: f64,
    pub stop: StopReason,
    /// Weight in the top bin, which also absorbs mass beyond `n_max`.
    pub last_bin_mass: f64,
    /// Log-likelihood before each M-step, then at the estimate.
    #[serde(skip)]
    pub log_likelihood_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub n_max: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            n_max: DEFAULT_N_MAX,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

const LANES: usize = 8;

/// Kernel rows `z^n / n!`, each scaled by its largest entry, stored
/// column-major within blocks of [`BLOCK`] samples.
struct Kernel {
    width: usize,
    /// Per block, `width` contiguous columns of the block's length.
    blocks: Vec<Vec<f64>>,
    /// `ln(scale_i) - z_i`, the per-sample constant of the log-likelihood.
    offsets: Vec<f64>,
}

impl Kernel {
    fn build(samples: &[f64], n_max: usize) -> Self {
        let width = n_max + 1;
        let ln_fact: Vec<f64> = (0..width).map(|n| ln_factorial(n as u32)).collect();
        let mut offsets = Vec::with_capacity(samples.len());
        let mut blocks = Vec::with_capacity(samples.len().div_ceil(BLOCK));
        for chunk in samples.chunks(BLOCK) {
            let len = chunk.len();
            let mut cols = vec![0.0; width * len];
            for (i, &z) in chunk.iter().enumerate() {
                if z == 0.0 {
                    cols[i] = 1.0;
                    offsets.push(0.0);
                    continue;
                }
                let ln_z = z.ln();
                let logs = (0..width).map(|n| n as f64 * ln_z - ln_fact[n]);
                let peak = logs.clone().fold(f64::NEG_INFINITY, f64::max);
                for (n, l) in logs.enumerate() {
                    cols[n * len + i] = (l - peak).exp();
                }
                offsets.push(peak - z);
            }
            blocks.push(cols);
        }
        Kernel {
            width,
            blocks,
            offsets,
        }
    }

    /// One E-step: returns `Σ_i K_in / s_i` per component and `Σ_i ln s_i`,
    /// where `s_i = Σ_n P_n K_in`.
    fn e_step(&self, probs: &[f64]) -> (Vec<f64>, f64) {
        let mut scratch = Vec::with_capacity(BLOCK);
        let partials: Vec<(Vec<f64>, f64)> = self
            .blocks
            .iter()
            .map(|cols| self.block_partial(cols, probs, &mut scratch))
            .collect();
        reduce_pairwise(partials, self.width)
    }

    fn block_partial(&self, cols: &[f64], probs: &[f64], s: &mut Vec<f64>) -> (Vec<f64>, f64) {
        let len = cols.len() / self.width;
        s.clear();
        s.resize(len, 0.0);
        for (col, &p) in cols.chunks_exact(len).zip(probs) {
            if p == 0.0 {
                continue;
            }
            for (si, k) in s.iter_mut().zip(col) {
                *si += p * k;
            }
        }
        let ln_sum = ln_product(s);
        for si in s.iter_mut() {
            *si = 1.0 / *si;
        }
        let acc = cols.chunks_exact(len).map(|col| dot(col, s)).collect();
        (acc, ln_sum)
    }
}

/// Dot product with a fixed lane split, so the rounding is reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            lanes[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    pairwise_sum(&lanes) + tail
}

/// `Σ ln x_i` through running products with explicit exponent tracking.
fn ln_product(xs: &[f64]) -> f64 {
    let mut mant = [1.0_f64; LANES];
    let mut exp2: i64 = 0;
    let fold = |m: &mut f64, x: f64, exp2: &mut i64| {
        if x < 1e-200 {
            let (f, e) = frexp(x);
            *m *= f;
            *exp2 += e;
        } else {
            *m *= x;
        }
        if !(1e-100..=1e100).contains(m) {
            let (f, e) = frexp(*m);
            *m = f;
            *exp2 += e;
        }
    };
    let chunks = xs.chunks_exact(LANES);
    let rest = chunks.remainder();
    for c in chunks {
        for l in 0..LANES {
            fold(&mut mant[l], c[l], &mut exp2);
        }
    }
    for (l, &x) in rest.iter().enumerate() {
        fold(&mut mant[l], x, &mut exp2);
    }
    mant.iter().map(|m| m.ln()).sum::<f64>() + exp2 as f64 * std::f64::consts::LN_2
}

fn frexp(x: f64) -> (f64, i64) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    if exp == 0 {
        // subnormal: scale into the normal range first
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let mant = f64::from_bits((bits & !(0x7ff << 52)) | (1022 << 52));
    (mant, exp - 1022)
}

fn reduce_pairwise(mut parts: Vec<(Vec<f64>, f64)>, width: usize) -> (Vec<f64>, f64) {
    if parts.is_empty() {
        return (vec![0.0; width], 0.0);
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((mut a, la)) = it.next() {
            match it.next() {
                Some((b, lb)) => {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    next.push((a, la + lb));
                }
                None => next.push((a, la)),
            }
        }
        parts = next;
    }
    parts.pop().unwrap()
}

pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Maximum-likelihood photon-number distribution by EM from a uniform start.
pub fn reconstruct(
    samples: &ZSampleSet,
    n_max: usize,
    tol: f64,
    max_iters: usize,
) -> Result<ReconstructionReport> {
    if n_max == 0 {
        return Err(Error::domain("n_max must be >= 1"));
    }
    reconstruct_from(samples, &PhotonNumberDistribution::uniform(n_max)?, tol, max_iters)
}

pub fn reconstruct_with(samples: &ZSampleSet, config: EmConfig) -> Result<ReconstructionReport> {
    reconstruct(samples, config.n_max, config.tol, config.max_iters)
}

/// EM from an explicit starting point; `start.n_max()` sets the truncation.
///
/// Each iteration takes one EM step and stops once that step moves no weight
/// by more than `tol`. Otherwise a second EM step is taken and the pair is
/// extrapolated (SQUAREM); the extrapolation backtracks to the plain double
/// step whenever it would leave the simplex or lower the likelihood.
pub fn reconstruct_from(
    samples: &ZSampleSet,
    start: &PhotonNumberDistribution,
    tol: f64,
    max_iters: usize,
) -> Result<ReconstructionReport> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            required: MIN_SAMPLES,
            actual: samples.len(),
        });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be > 0, got {tol}")));
    }
    let n = samples.len() as f64;
    let kernel = Kernel::build(samples.samples(), start.n_max());
    let offset = pairwise_sum(&kernel.offsets);
    let eval = |p: &[f64]| {
        let (acc, ln_s) = kernel.e_step(p);
        (em_update(p, &acc, n), ln_s + offset)
    };

    let mut trace = Vec::new();
    let push = |trace: &mut Vec<f64>, ll: f64, iteration: usize| -> Result<()> {
        if let Some(&prev) = trace.last() {
            let slack = LL_SLACK * f64::max(1.0, f64::abs(prev));
            if ll < prev - slack {
                return Err(Error::Statistics(format!(
                    "EM log-likelihood decreased at iteration {iteration}: {prev} -> {ll}"
                )));
            }
        }
        trace.push(ll);
        Ok(())
    };

    let mut p0 = start.probs().to_vec();
    let (mut p1, mut ll0) = eval(&p0);
    let mut iterations = 0;
    let (estimate, final_delta, stop) = loop {
        push(&mut trace, ll0, iterations)?;
        iterations += 1;
        let delta = max_abs_diff(&p0, &p1);
        if delta < tol || iterations >= max_iters {
            let stop = if delta < tol {
                StopReason::Converged
            } else {
                StopReason::IterationCap
            };
            break (p1, delta, stop);
        }
        let (p2, ll1) = eval(&p1);
        push(&mut trace, ll1, iterations)?;
        let (next, update, ll) = extrapolate(&p0, &p1, &p2, ll1, &eval);
        p0 = next;
        p1 = update;
        ll0 = ll;
    };
    let (_, ll) = eval(&estimate);
    push(&mut trace, ll, iterations)?;

    let estimate = PhotonNumberDistribution::from_weights(estimate)?;
    Ok(ReconstructionReport {
        last_bin_mass: estimate.get(estimate.n_max()),
        log_likelihood: ll,
        estimate,
        iterations,
        final_delta,
        stop,
        log_likelihood_trace: trace,
    })
}

fn em_update(p: &[f64], acc: &[f64], n: f64) -> Vec<f64> {
    let next: Vec<f64> = p.iter().zip(acc).map(|(p, a)| p * a / n).collect();
    // renormalize against rounding drift
    let total: f64 = next.iter().sum();
    next.into_iter().map(|p| p / total).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Squared-extrapolation step from `p0` through two EM iterates.
///
/// Returns the accepted point, its EM update and its log-likelihood, which
/// is never below `ll1`, the log-likelihood at `p1`.
fn extrapolate<F>(
    p0: &[f64],
    p1: &[f64],
    p2: &[f64],
    ll1: f64,
    eval: &F,
) -> (Vec<f64>, Vec<f64>, f64)
where
    F: Fn(&[f64]) -> (Vec<f64>, f64),
{
    let r: Vec<f64> = p1.iter().zip(p0).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = p2
        .iter()
        .zip(p1)
        .zip(&r)
        .map(|((c, b), r)| c - b - r)
        .collect();
    let norm = |x: &[f64]| x.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (nr, nv) = (norm(&r), norm(&v));
    let mut alpha = if nv > 0.0 { -nr / nv } else { -1.0 };
    loop {
        if alpha > -1.0 || (alpha + 1.0).abs() < 1e-3 {
            let (update, ll) = eval(p2);
            return (p2.to_vec(), update, ll);
        }
        let cand: Vec<f64> = p0
            .iter()
            .zip(&r)
            .zip(&v)
            .map(|((p, r), v)| p - 2.0 * alpha * r + alpha * alpha * v)
            .collect();
        let feasible = cand
            .iter()
            .zip(p2)
            .all(|(&c, &q)| c > 0.0 || (c == 0.0 && q == 0.0));
        if feasible {
            let total: f64 = cand.iter().sum();
            let cand: Vec<f64> = cand.into_iter().map(|c| c / total).collect();
            let (update, ll) = eval(&cand);
            if ll >= ll1 {
                return (cand, update, ll);
            }
        }
        alpha = 0.5 * (alpha - 1.0);
    }
}

/// `(P_{1,0}, P_{1,1}, Σ_{n>=2} P_{1,n})` from a reconstructed distribution.
pub fn split_p1n(estimate: &PhotonNumberDistribution) -> (f64, f64, f64) {
    let probs = estimate.probs();
    let multi = pairwise_sum(&probs[2.min(probs.len())..]);
    (probs[0], probs[1], multi)
}
