use thiserror::Error;

/// Errors raised by the key-rate engine and simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value object was constructed in violation of its invariants.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("insufficient data: need at least {required} samples, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    /// The QBER is undefined because no event was kept.
    #[error("QBER undefined: gain is zero")]
    UndefinedQber,

    /// Both yields vanish at a zero detection threshold.
    #[error("degenerate threshold: tau must be > 0 for {0}")]
    DegenerateThreshold(&'static str),

    #[error("no single-photon events: Q(1,1) is zero")]
    NoSinglePhotonEvents,

    #[error("objective evaluation failed at tau = {tau}: {reason}")]
    Evaluation { tau: f64, reason: String },

    #[error("statistics error: {0}")]
    Statistics(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
