use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Subcommand};
use hqkd_core::montecarlo::DEFAULT_BATCH_SIZE;
use hqkd_core::optimize::{DEFAULT_COARSE_STEP, DEFAULT_TAU_MAX, DEFAULT_TAU_MIN};
use hqkd_core::pnr::{DEFAULT_MAX_ITERS, DEFAULT_N_MAX, DEFAULT_TOL};
use hqkd_core::protocol::DEFAULT_GAMMA_DB_PER_KM;
use hqkd_core::{Analysis, Channel, DetectionMode, Objective, Scenario, TauChoice, TauSearch, Threshold};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Detection efficiency and dark-count probability against the threshold.
    DetectorCurves(DetectorCurvesArgs),
    /// Mutual information against distance for the three detector models.
    MutualInfo(MutualInfoArgs),
    /// Secret-key rate against distance.
    Keyrate(KeyrateArgs),
    /// Threshold sweep for any objective, listing every local optimum.
    Sweep(SweepArgs),
    /// Event-level simulation of the protocol.
    Montecarlo(MontecarloArgs),
    /// Photon-number distribution from threshold-free Z samples.
    Reconstruct(ReconstructArgs),
    /// Regenerate the datasets behind the figures.
    Figures(FiguresArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::DetectorCurves(_) => "detector-curves",
            Command::MutualInfo(_) => "mutual-info",
            Command::Keyrate(_) => "keyrate",
            Command::Sweep(_) => "sweep",
            Command::Montecarlo(_) => "montecarlo",
            Command::Reconstruct(_) => "reconstruct",
            Command::Figures(_) => "figures",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Command::Montecarlo(a) => vec![a.seed],
            Command::Reconstruct(a) if a.input.is_none() => vec![a.seed],
            _ => Vec::new(),
        }
    }
}

/// `start:end:step`, inclusive of `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl FromStr for Range {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(format!("expected start:end:step, got '{s}'"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
        Ok(Range {
            start: num(a)?,
            end: num(b)?,
            step: num(c)?,
        })
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.step)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScenarioArgs {
    /// independent, differential or perfect-spd
    #[arg(long, default_value = "independent")]
    pub mode: DetectionMode,
    /// Misalignment error probability E_d, in [0, 0.5]
    #[arg(long = "ed", default_value_t = 0.0)]
    pub e_d: f64,
    /// Fiber attenuation in dB/km
    #[arg(long, default_value_t = DEFAULT_GAMMA_DB_PER_KM)]
    pub gamma: f64,
    /// Error-correction efficiency f
    #[arg(long = "f-ec", default_value_t = 1.0)]
    pub f_ec: f64,
}

impl ScenarioArgs {
    pub fn fiber(&self, length_km: f64, tau: f64) -> hqkd_core::Result<Scenario> {
        Scenario::new(
            Channel::fiber(self.gamma, length_km)?,
            self.e_d,
            self.f_ec,
            self.mode,
            Threshold::new(tau)?,
        )
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[group(required = true, multiple = false)]
pub struct DistanceArgs {
    /// Single fiber length in km
    #[arg(long)]
    pub length: Option<f64>,
    /// Distance grid lmin:lmax:step in km
    #[arg(long)]
    pub sweep: Option<Range>,
}

impl DistanceArgs {
    pub fn lengths(&self) -> hqkd_core::Result<Vec<f64>> {
        match (self.length, self.sweep) {
            (Some(l), _) => Ok(vec![l]),
            (None, Some(r)) => hqkd_core::optimize::linear_grid(r.start, r.end, r.step),
            (None, None) => Err(hqkd_core::Error::domain("give --length or --sweep")),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TauArgs {
    /// Fixed detection threshold
    #[arg(long, conflicts_with = "optimize_tau")]
    pub tau: Option<f64>,
    /// Optimize the threshold at each distance (the default without --tau)
    #[arg(long)]
    pub optimize_tau: bool,
    #[arg(long, default_value_t = DEFAULT_TAU_MIN)]
    pub tau_min: f64,
    #[arg(long, default_value_t = DEFAULT_TAU_MAX)]
    pub tau_max: f64,
    /// Coarse grid step of the threshold search
    #[arg(long, default_value_t = DEFAULT_COARSE_STEP)]
    pub tau_step: f64,
}

impl TauArgs {
    pub fn choice(&self) -> TauChoice {
        match self.tau {
            Some(_) => TauChoice::Fixed,
            None => TauChoice::Optimize(TauSearch {
                min: self.tau_min,
                max: self.tau_max,
                step: self.tau_step,
            }),
        }
    }

    /// Threshold placed in the scenario template.
    pub fn template(&self) -> f64 {
        self.tau.unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DetectorCurvesArgs {
    #[arg(long, default_value = "0:10:0.01")]
    pub tau: Range,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MutualInfoArgs {
    /// Distance grid lmin:lmax:step in km
    #[arg(long, default_value = "0:100:1")]
    pub sweep: Range,
    /// Restrict to one detector model
    #[arg(long)]
    pub mode: Option<DetectionMode>,
    #[arg(long, default_value_t = DEFAULT_GAMMA_DB_PER_KM)]
    pub gamma: f64,
    #[command(flatten)]
    pub tau: TauArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KeyrateArgs {
    /// standard, improved or improved-tight
    #[arg(long, default_value = "improved")]
    pub analysis: Analysis,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub distance: DistanceArgs,
    #[command(flatten)]
    pub tau: TauArgs,
    /// Pulses per second; adds a rate_bps column
    #[arg(long)]
    pub pulse_rate: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// mutual-info, standard, improved or improved-tight
    #[arg(long, default_value = "improved")]
    pub objective: Objective,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub distance: DistanceArgs,
    #[command(flatten)]
    pub tau: TauArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MontecarloArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub pulses: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: u64,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Fiber length in km
    #[arg(long, conflicts_with = "eta")]
    pub length: Option<f64>,
    /// Channel transmittance, instead of a fiber length
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Also dump the first pulses as CSV to this file
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub record_count: usize,
}

impl MontecarloArgs {
    pub fn scenario(&self) -> hqkd_core::Result<Scenario> {
        let channel = match (self.eta, self.length) {
            (Some(eta), _) => Channel::transmittance(eta)?,
            (None, l) => Channel::fiber(self.scenario.gamma, l.unwrap_or(0.0))?,
        };
        Scenario::new(
            channel,
            self.scenario.e_d,
            self.scenario.f_ec,
            self.scenario.mode,
            Threshold::new(self.tau)?,
        )
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "truth"])))]
pub struct ReconstructArgs {
    /// Newline-delimited Z values
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated photon-number probabilities to sample from
    #[arg(long, value_delimiter = ',')]
    pub truth: Option<Vec<f64>>,
    /// Synthetic sample count
    #[arg(long, default_value_t = 1_000_000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FiguresArgs {
    #[arg(long, default_value = "figures")]
    pub out_dir: PathBuf,
    /// Only these figures, e.g. --only fig3 --only fig8
    #[arg(long, value_parser = crate::figures::FIGURES)]
    pub only: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
