//! Key-rate engine and event-level simulator for BB84 with conjugate
//! homodyne detectors operated as photon counters.
//!
//! * [`detector`]: `Z` statistics, thresholds, sampling.
//! * [`pnr`]: photon-number reconstruction by EM.
//! * [`protocol`]: channel, gains, QBERs and mutual information.
//! * [`security`]: standard, improved and tight-bound key rates.
//! * [`optimize`]: threshold optimization and distance sweeps.
//! * [`montecarlo`]: pulse-level simulation used to validate the closed forms.

pub mod detector;
pub mod error;
pub mod montecarlo;
pub mod optimize;
pub mod pnr;
pub mod protocol;
pub mod security;

pub use detector::{PhotonNumberDistribution, Threshold, ZOutcome};
pub use error::{Error, Result};
pub use optimize::{Objective, SweepConfig, SweepRow, TauChoice, TauSearch};
pub use protocol::{Channel, DetectionMode, DetectionStats, Scenario};
pub use security::{Analysis, KeyRateBreakdown};
