//! Detection-threshold optimization and distance sweeps.
//!
//! Rate-versus-threshold curves can have two separate maxima, so the search
//! scans a coarse grid first, refines every local maximum it finds by golden
//! section, and only then picks the global one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::Threshold;
use crate::error::{Error, Result};
use crate::protocol::{h2, honest_gain_qber, mutual_information, Scenario};
use crate::security::{keyrate_improved_honest, keyrate_standard_scenario};

pub const DEFAULT_TAU_MIN: f64 = 1e-3;
pub const DEFAULT_TAU_MAX: f64 = 20.0;
pub const DEFAULT_COARSE_STEP: f64 = 0.01;
/// Absolute tolerance of the golden-section refinement.
pub const TAU_TOL: f64 = 1e-6;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimum {
    pub tau: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauOptimum {
    pub tau: f64,
    pub value: f64,
    /// Every refined local maximum, in increasing `tau`.
    pub local_optima: Vec<LocalOptimum>,
}

/// Inclusive grid `start, start + step, ...` that always ends at `end`.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && end.is_finite() && step.is_finite() && step > 0.0) || end < start {
        return Err(Error::domain(format!(
            "invalid grid {start}:{end}:{step}; need start <= end and step > 0"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| start + i as f64 * step).collect();
    let last = *grid.last().unwrap();
    if end - last > 1e-9 * step.max(end.abs()) {
        grid.push(end);
    } else if let Some(l) = grid.last_mut() {
        *l = end;
    }
    Ok(grid)
}

fn eval<F>(f: &mut F, tau: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    match f(tau) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Evaluation {
            tau,
            reason: format!("objective returned {v}"),
        }),
        Err(e) => Err(Error::Evaluation {
            tau,
            reason: e.to_string(),
        }),
    }
}

/// Maximizes `f` on `[lo, hi]` by golden section.
fn golden_max<F>(f: &mut F, mut a: f64, mut b: f64, tol: f64) -> Result<LocalOptimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(f, c)?;
    let mut fd = eval(f, d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(f, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(f, d)?;
        }
    }
    let tau = 0.5 * (a + b);
    Ok(LocalOptimum {
        tau,
        value: eval(f, tau)?,
    })
}

/// Global maximum of `objective` over `[lo, hi]`.
///
/// A grid point exceeding its left neighbour and not below its right one is
/// a local maximum (endpoints compare against their single neighbour); each
/// is refined inside the bracket formed by its neighbours. Equal maxima are
/// resolved towards the smaller threshold.
pub fn optimize_tau<F>(mut objective: F, lo: f64, hi: f64, coarse_step: f64) -> Result<TauOptimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(Error::domain(format!("invalid tau bounds [{lo}, {hi}]")));
    }
    let grid = linear_grid(lo, hi, coarse_step)?;
    let values = grid
        .iter()
        .map(|&t| eval(&mut objective, t))
        .collect::<Result<Vec<_>>>()?;

    let last = grid.len() - 1;
    let mut local_optima = Vec::new();
    for i in 0..=last {
        let rises = i == 0 || values[i] > values[i - 1];
        let holds = i == last || values[i] >= values[i + 1];
        if !(rises && holds) {
            continue;
        }
        let coarse = LocalOptimum {
            tau: grid[i],
            value: values[i],
        };
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(last)];
        let refined = if b > a {
            golden_max(&mut objective, a, b, TAU_TOL)?
        } else {
            coarse
        };
        local_optima.push(if refined.value > coarse.value { refined } else { coarse });
    }

    let best = local_optima
        .iter()
        .copied()
        .reduce(|best, cand| if cand.value > best.value { cand } else { best })
        .expect("a nonempty grid always has a maximum");
    Ok(TauOptimum {
        tau: best.tau,
        value: best.value,
        local_optima,
    })
}

/// Quantity maximized over the threshold at each distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    MutualInfo,
    StandardRate,
    ImprovedRate,
    ImprovedTightRate,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::MutualInfo => "mutual-info",
            Objective::StandardRate => "standard",
            Objective::ImprovedRate => "improved",
            Objective::ImprovedTightRate => "improved-tight",
        }
    }

    fn needs_positive_tau(self) -> bool {
        matches!(self, Objective::ImprovedRate | Objective::ImprovedTightRate)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mutual-info" => Ok(Objective::MutualInfo),
            "standard" => Ok(Objective::StandardRate),
            "improved" => Ok(Objective::ImprovedRate),
            "improved-tight" | "tight" => Ok(Objective::ImprovedTightRate),
            other => Err(Error::domain(format!("unknown objective '{other}'"))),
        }
    }
}

/// One evaluated operating point. Fields an objective does not define are
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub value: f64,
    pub q: f64,
    pub e: f64,
    pub q10: Option<f64>,
    pub q11: Option<f64>,
    pub e_uxv: Option<f64>,
    pub eve_info: Option<f64>,
}

/// Evaluates `objective` at the scenario's own threshold.
pub fn evaluate(scenario: &Scenario, objective: Objective) -> Result<RatePoint> {
    match objective {
        Objective::MutualInfo => {
            let (q, e) = honest_gain_qber(scenario)?;
            Ok(RatePoint {
                value: mutual_information(q, e),
                q,
                e,
                q10: None,
                q11: None,
                e_uxv: None,
                eve_info: None,
            })
        }
        Objective::StandardRate => {
            let (rate, q, e) = keyrate_standard_scenario(scenario)?;
            Ok(RatePoint {
                value: rate,
                q,
                e,
                q10: None,
                q11: None,
                e_uxv: Some(e),
                eve_info: Some(h2(e)),
            })
        }
        Objective::ImprovedRate | Objective::ImprovedTightRate => {
            let b = keyrate_improved_honest(scenario, objective == Objective::ImprovedTightRate)?;
            Ok(RatePoint {
                value: b.rate,
                q: b.q,
                e: b.e,
                q10: Some(b.q10),
                q11: Some(b.q11),
                e_uxv: Some(b.e11_upper_virtual),
                eve_info: Some(b.eve_info),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSearch {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for TauSearch {
    fn default() -> Self {
        TauSearch {
            min: DEFAULT_TAU_MIN,
            max: DEFAULT_TAU_MAX,
            step: DEFAULT_COARSE_STEP,
        }
    }
}

/// How the threshold is chosen at each distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauChoice {
    /// Use the scenario's threshold as is.
    Fixed,
    Optimize(TauSearch),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub objective: Objective,
    pub lengths_km: Vec<f64>,
    pub tau: TauChoice,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths_km.is_empty() {
            return Err(Error::domain("distance grid is empty"));
        }
        if self.lengths_km.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("distance grid must be strictly increasing"));
        }
        if let TauChoice::Optimize(s) = self.tau {
            if !(s.step > 0.0 && s.max > s.min && s.min >= 0.0) {
                return Err(Error::domain(format!(
                    "invalid tau search [{}, {}] step {}",
                    s.min, s.max, s.step
                )));
            }
            if self.objective.needs_positive_tau()
                && self.scenario.mode.uses_threshold()
                && s.min <= 0.0
            {
                return Err(Error::DegenerateThreshold("the improved analyses"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub length_km: f64,
    /// `None` when the detection mode has no threshold.
    pub tau_opt: Option<f64>,
    pub objective_value: f64,
    pub local_optima: Vec<LocalOptimum>,
    pub point: RatePoint,
}

/// Optimizes (or fixes) the threshold at every distance, in distance order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    config
        .lengths_km
        .iter()
        .map(|&length| sweep_point(config, length))
        .collect()
}

fn sweep_point(config: &SweepConfig, length_km: f64) -> Result<SweepRow> {
    let scenario = config.scenario.with_length(length_km)?;
    let objective = config.objective;
    let search = match config.tau {
        TauChoice::Optimize(s) if scenario.mode.uses_threshold() => Some(s),
        _ => None,
    };
    let Some(search) = search else {
        let point = evaluate(&scenario, objective)?;
        return Ok(SweepRow {
            length_km,
            tau_opt: scenario.mode.uses_threshold().then(|| scenario.tau.value()),
            objective_value: point.value,
            local_optima: Vec::new(),
            point,
        });
    };
    let opt = optimize_tau(
        |tau| evaluate(&scenario.with_tau(Threshold::new(tau)?), objective).map(|p| p.value),
        search.min,
        search.max,
        search.step,
    )?;
    let point = evaluate(&scenario.with_tau(Threshold::new(opt.tau)?), objective)?;
    Ok(SweepRow {
        length_km,
        tau_opt: Some(opt.tau),
        objective_value: point.value,
        local_optima: opt.local_optima,
        point,
    })
}

/// Distance at which the objective first drops from positive to
/// nonpositive, by linear interpolation between the bracketing rows.
pub fn zero_crossing(rows: &[SweepRow]) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.objective_value > 0.0 && b.objective_value <= 0.0).then(|| {
            let frac = a.objective_value / (a.objective_value - b.objective_value);
            a.length_km + frac * (b.length_km - a.length_km)
        })
    })
}

/// A discontinuity of the optimal threshold between two sweep rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauJump {
    /// Index of the row before the jump.
    pub index: usize,
    pub from_km: f64,
    pub to_km: f64,
    pub delta_tau: f64,
    pub median_step: f64,
}

impl TauJump {
    pub fn location_km(&self) -> f64 {
        0.5 * (self.from_km + self.to_km)
    }
}

/// Largest step in the optimal threshold, reported when it exceeds
/// `factor` times the median step.
pub fn find_tau_jump(rows: &[SweepRow], factor: f64) -> Option<TauJump> {
    let taus: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.tau_opt.map(|t| (i, t)))
        .collect();
    if taus.len() < 3 {
        return None;
    }
    let steps: Vec<(usize, f64)> = taus
        .windows(2)
        .map(|w| (w[0].0, (w[1].1 - w[0].1).abs()))
        .collect();
    let mut sorted: Vec<f64> = steps.iter().map(|s| s.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let &(index, delta_tau) = steps.iter().max_by(|a, b| a.1.total_cmp(&b.1))?;
    (delta_tau > factor * median).then(|| TauJump {
        index,
        from_km: rows[index].length_km,
        to_km: rows[index + 1].length_km,
        delta_tau,
        median_step: median,
    })
}
