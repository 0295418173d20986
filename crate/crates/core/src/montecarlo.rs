//! Event-level simulation of the protocol.
//!
//! Every pulse draws Alice's bit and basis, loss, misalignment, and one `Z`
//! outcome per detector. Both independent-mode conventions (discarding or
//! squashing double clicks) and the differential comparator are tallied from
//! the same draws, so the simulator is an oracle for every closed form in
//! [`crate::protocol`] and [`crate::security`].
//!
//! Pulses are processed in fixed-size batches. Batch `b` draws from the
//! ChaCha8 stream `b` keyed by the master seed, so a summary is a pure
//! function of `(scenario, pulses, seed, batch_size)`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{click_map, sample_z, PhotonNumberDistribution, Threshold, ZOutcome};
use crate::error::{Error, Result};
use crate::pnr::ZSampleSet;
use crate::protocol::{DetectionMode, Scenario};
use crate::security::e11_map;

pub const DEFAULT_BATCH_SIZE: u64 = 1 << 16;
/// Upper limit on a raw pulse dump.
pub const MAX_RECORDS: usize = 100_000;
/// Fewest conditioned events accepted by [`empirical_e11_check`].
pub const MIN_CONDITIONED_EVENTS: u64 = 1000;

/// Seeded generator for one batch.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Probability that Bob's basis equals Alice's. Rounds with different
    /// bases are sifted out.
    pub basis_match: f64,
    pub batch_size: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            basis_match: 1.0,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BobOutcome {
    NoClick,
    Bit0,
    Bit1,
    DoubleClick,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub alice_bit: u8,
    pub alice_basis: u8,
    pub bob_basis: u8,
    pub photon_survived: bool,
    /// Detector the photon reached, if it survived.
    pub routed_detector: Option<u8>,
    /// Bit an ideal non-demolition detector pair would have reported.
    pub virtual_bit: Option<u8>,
    pub z0: ZOutcome,
    pub z1: ZOutcome,
    pub bob_outcome: BobOutcome,
    pub differential_bit: u8,
    /// `z0 == z1`; the differential bit then defaults to 0.
    pub differential_tie: bool,
    /// Random bit given to a double click under the squashing convention.
    pub squash_bit: Option<u8>,
}

impl PulseRecord {
    pub fn sifted(&self) -> bool {
        self.alice_basis == self.bob_basis
    }
}

#[derive(Debug, Clone, Copy)]
struct PulseParams {
    eta_ch: f64,
    e_d: f64,
    tau: Threshold,
    basis_match: f64,
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < p
    }
}

fn simulate_pulse<R: Rng>(rng: &mut R, p: &PulseParams) -> PulseRecord {
    let alice_bit = rng.gen::<bool>() as u8;
    let alice_basis = rng.gen::<bool>() as u8;
    let bob_basis = if bernoulli(rng, p.basis_match) {
        alice_basis
    } else {
        1 - alice_basis
    };
    let photon_survived = bernoulli(rng, p.eta_ch);
    let routed_detector = photon_survived.then(|| {
        if alice_basis == bob_basis {
            alice_bit ^ bernoulli(rng, p.e_d) as u8
        } else {
            rng.gen::<bool>() as u8
        }
    });
    let n0 = (routed_detector == Some(0)) as u32;
    let n1 = (routed_detector == Some(1)) as u32;
    let z0 = sample_z(n0, rng);
    let z1 = sample_z(n1, rng);

    let bob_outcome = match (click_map(z0, p.tau), click_map(z1, p.tau)) {
        (false, false) => BobOutcome::NoClick,
        (true, false) => BobOutcome::Bit0,
        (false, true) => BobOutcome::Bit1,
        (true, true) => BobOutcome::DoubleClick,
    };
    let squash_bit = (bob_outcome == BobOutcome::DoubleClick).then(|| rng.gen::<bool>() as u8);
    let differential_tie = z0 == z1;
    PulseRecord {
        alice_bit,
        alice_basis,
        bob_basis,
        photon_survived,
        routed_detector,
        virtual_bit: routed_detector,
        z0,
        z1,
        bob_outcome,
        differential_bit: (z1 > z0) as u8,
        differential_tie,
        squash_bit,
    }
}

/// Raw event counts; all counters except `pulses` refer to sifted rounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub pulses: u64,
    pub sifted: u64,
    pub none: u64,
    pub correct: u64,
    pub wrong: u64,
    pub double: u64,
    /// Errors under the squashing convention (wrong clicks plus double
    /// clicks whose random bit is wrong).
    pub squashed_errors: u64,
    pub differential_errors: u64,
    pub differential_ties: u64,
    /// Rounds where Bob received vacuum / one photon.
    pub bob_vacuum: u64,
    pub bob_single: u64,
    /// Single clicks given vacuum / one photon at Bob.
    pub vacuum_single_clicks: u64,
    pub photon_single_clicks: u64,
    /// Real-bit and virtual-bit errors among single clicks given one photon.
    pub photon_single_click_errors: u64,
    pub photon_single_click_virtual_errors: u64,
    /// Differential-mode errors given one photon at Bob.
    pub photon_differential_errors: u64,
    /// Virtual-bit errors given one photon at Bob.
    pub virtual_errors: u64,
}

impl Tally {
    fn record(&mut self, r: &PulseRecord) {
        self.pulses += 1;
        if !r.sifted() {
            return;
        }
        self.sifted += 1;
        let a = r.alice_bit;
        let single_bit = match r.bob_outcome {
            BobOutcome::NoClick => {
                self.none += 1;
                None
            }
            BobOutcome::DoubleClick => {
                self.double += 1;
                self.squashed_errors += (r.squash_bit != Some(a)) as u64;
                None
            }
            BobOutcome::Bit0 => Some(0),
            BobOutcome::Bit1 => Some(1),
        };
        if let Some(b) = single_bit {
            if b == a {
                self.correct += 1;
            } else {
                self.wrong += 1;
                self.squashed_errors += 1;
            }
        }
        let diff_error = r.differential_bit != a;
        self.differential_errors += diff_error as u64;
        self.differential_ties += r.differential_tie as u64;

        match r.virtual_bit {
            None => {
                self.bob_vacuum += 1;
                self.vacuum_single_clicks += single_bit.is_some() as u64;
            }
            Some(v) => {
                self.bob_single += 1;
                self.virtual_errors += (v != a) as u64;
                self.photon_differential_errors += diff_error as u64;
                if let Some(b) = single_bit {
                    self.photon_single_clicks += 1;
                    self.photon_single_click_errors += (b != a) as u64;
                    self.photon_single_click_virtual_errors += (v != a) as u64;
                }
            }
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.pulses += o.pulses;
        self.sifted += o.sifted;
        self.none += o.none;
        self.correct += o.correct;
        self.wrong += o.wrong;
        self.double += o.double;
        self.squashed_errors += o.squashed_errors;
        self.differential_errors += o.differential_errors;
        self.differential_ties += o.differential_ties;
        self.bob_vacuum += o.bob_vacuum;
        self.bob_single += o.bob_single;
        self.vacuum_single_clicks += o.vacuum_single_clicks;
        self.photon_single_clicks += o.photon_single_clicks;
        self.photon_single_click_errors += o.photon_single_click_errors;
        self.photon_single_click_virtual_errors += o.photon_single_click_virtual_errors;
        self.photon_differential_errors += o.photon_differential_errors;
        self.virtual_errors += o.virtual_errors;
    }
}

/// A binomial proportion with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub value: f64,
    pub sigma: f64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(hits: u64, trials: u64) -> Self {
        if trials == 0 {
            return Proportion {
                value: f64::NAN,
                sigma: f64::NAN,
                trials,
            };
        }
        let p = hits as f64 / trials as f64;
        Proportion {
            value: p,
            sigma: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }

    /// Whether `expected` lies within `k` standard errors, where the
    /// standard error is evaluated at `expected` so degenerate samples
    /// (all hits or none) are still judged.
    pub fn agrees_with(&self, expected: f64, k: f64) -> bool {
        let sigma = (expected * (1.0 - expected) / self.trials as f64).sqrt();
        (self.value - expected).abs() <= k * sigma.max(self.sigma) + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub seed: u64,
    pub options: SimOptions,
    pub eta_ch: f64,
    pub e_d: f64,
    pub tau: f64,
    pub counts: Tally,
    pub p_none: Proportion,
    pub p_correct: Proportion,
    pub p_wrong: Proportion,
    pub p_double: Proportion,
    /// Sifted gain and QBER with double clicks discarded.
    pub q_sifted: Proportion,
    pub e_sifted: Proportion,
    /// Gain and QBER with double clicks kept under a random bit.
    pub q_squashed: Proportion,
    pub e_squashed: Proportion,
    pub e_differential: Proportion,
    pub p10: Proportion,
    pub p11: Proportion,
    pub y10: Proportion,
    pub y11: Proportion,
    /// Real-bit QBER of single clicks given one photon.
    pub e11_independent: Proportion,
    /// Virtual-bit QBER over the same events.
    pub e11_independent_virtual: Proportion,
    pub e11_differential: Proportion,
    pub e11_virtual: Proportion,
}

impl SimSummary {
    fn from_tally(seed: u64, options: SimOptions, params: &PulseParams, t: Tally) -> Self {
        let s = t.sifted;
        let single = t.correct + t.wrong;
        let kept = s - t.none;
        SimSummary {
            seed,
            options,
            eta_ch: params.eta_ch,
            e_d: params.e_d,
            tau: params.tau.value(),
            counts: t,
            p_none: Proportion::new(t.none, s),
            p_correct: Proportion::new(t.correct, s),
            p_wrong: Proportion::new(t.wrong, s),
            p_double: Proportion::new(t.double, s),
            q_sifted: Proportion::new(single, s),
            e_sifted: Proportion::new(t.wrong, single),
            q_squashed: Proportion::new(kept, s),
            e_squashed: Proportion::new(t.squashed_errors, kept),
            e_differential: Proportion::new(t.differential_errors, s),
            p10: Proportion::new(t.bob_vacuum, s),
            p11: Proportion::new(t.bob_single, s),
            y10: Proportion::new(t.vacuum_single_clicks, t.bob_vacuum),
            y11: Proportion::new(t.photon_single_clicks, t.bob_single),
            e11_independent: Proportion::new(t.photon_single_click_errors, t.photon_single_clicks),
            e11_independent_virtual: Proportion::new(
                t.photon_single_click_virtual_errors,
                t.photon_single_clicks,
            ),
            e11_differential: Proportion::new(t.photon_differential_errors, t.bob_single),
            e11_virtual: Proportion::new(t.virtual_errors, t.bob_single),
        }
    }
}

fn params(scenario: &Scenario, options: &SimOptions) -> Result<PulseParams> {
    if !(0.0..=1.0).contains(&options.basis_match) || options.basis_match == 0.0 {
        return Err(Error::domain(format!(
            "basis-match probability must lie in (0, 1], got {}",
            options.basis_match
        )));
    }
    if options.batch_size == 0 {
        return Err(Error::domain("batch size must be >= 1"));
    }
    Ok(PulseParams {
        eta_ch: scenario.eta_ch(),
        e_d: scenario.e_d,
        tau: scenario.tau,
        basis_match: options.basis_match,
    })
}

pub fn simulate(scenario: &Scenario, pulses: u64, seed: u64) -> Result<SimSummary> {
    simulate_with(scenario, pulses, seed, SimOptions::default())
}

pub fn simulate_with(
    scenario: &Scenario,
    pulses: u64,
    seed: u64,
    options: SimOptions,
) -> Result<SimSummary> {
    if pulses == 0 {
        return Err(Error::domain("pulse count must be >= 1"));
    }
    let p = params(scenario, &options)?;
    let batches = pulses.div_ceil(options.batch_size);
    let mut total = Tally::default();
    for b in 0..batches {
        let len = options.batch_size.min(pulses - b * options.batch_size);
        let mut rng = batch_rng(seed, b);
        let mut tally = Tally::default();
        for _ in 0..len {
            tally.record(&simulate_pulse(&mut rng, &p));
        }
        total.merge(&tally);
    }
    Ok(SimSummary::from_tally(seed, options, &p, total))
}

/// The first `count` pulses of the run, identical to those [`simulate`]
/// tallies for the same seed.
pub fn simulate_records(scenario: &Scenario, count: usize, seed: u64) -> Result<Vec<PulseRecord>> {
    simulate_records_with(scenario, count, seed, SimOptions::default())
}

pub fn simulate_records_with(
    scenario: &Scenario,
    count: usize,
    seed: u64,
    options: SimOptions,
) -> Result<Vec<PulseRecord>> {
    if count > MAX_RECORDS {
        return Err(Error::domain(format!(
            "raw dumps are capped at {MAX_RECORDS} pulses, asked for {count}"
        )));
    }
    let p = params(scenario, &options)?;
    let mut out = Vec::with_capacity(count);
    let mut b = 0;
    while out.len() < count {
        let mut rng = batch_rng(seed, b);
        let len = (options.batch_size as usize).min(count - out.len());
        out.extend((0..len).map(|_| simulate_pulse(&mut rng, &p)));
        b += 1;
    }
    Ok(out)
}

/// Predicted and simulated single-photon QBER of the real detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E11Check {
    pub predicted: f64,
    pub measured: Proportion,
}

impl E11Check {
    pub fn agrees(&self, k: f64) -> bool {
        self.measured.agrees_with(self.predicted, k)
    }
}

/// Compares the virtual-to-real QBER map against simulation.
///
/// Independent mode conditions on a surviving photon and exactly one click;
/// differential mode on a surviving photon.
pub fn empirical_e11_check(scenario: &Scenario, pulses: u64, seed: u64) -> Result<E11Check> {
    e11_check_from(&simulate(scenario, pulses, seed)?, scenario)
}

/// [`empirical_e11_check`] on an existing simulation of `scenario`.
pub fn e11_check_from(summary: &SimSummary, scenario: &Scenario) -> Result<E11Check> {
    let (predicted, measured) = match scenario.mode {
        DetectionMode::Independent => (
            e11_map(scenario.e_d, scenario.tau, DetectionMode::Independent)?,
            summary.e11_independent,
        ),
        DetectionMode::Differential => (
            e11_map(scenario.e_d, scenario.tau, DetectionMode::Differential)?,
            summary.e11_differential,
        ),
        DetectionMode::PerfectSpd => (scenario.e_d, summary.e11_virtual),
    };
    if measured.trials < MIN_CONDITIONED_EVENTS {
        return Err(Error::Statistics(format!(
            "only {} conditioned events, need {MIN_CONDITIONED_EVENTS}",
            measured.trials
        )));
    }
    Ok(E11Check {
        predicted,
        measured,
    })
}

/// I.i.d. `Z` draws from a photon-number mixture.
pub fn emit_z_stream(dist: &PhotonNumberDistribution, count: usize, seed: u64) -> Result<ZSampleSet> {
    if count == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let picker = WeightedIndex::new(dist.probs())
        .map_err(|e| Error::Invariant(format!("photon-number weights: {e}")))?;
    let mut rng = batch_rng(seed, 0);
    let samples = (0..count)
        .map(|_| {
            let n = picker.sample(&mut rng) as u32;
            sample_z(n, &mut rng).value()
        })
        .collect();
    ZSampleSet::new(samples)
}
