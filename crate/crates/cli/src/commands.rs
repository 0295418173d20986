use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use hqkd_core::detector::detector_curves;
use hqkd_core::montecarlo::{
    e11_check_from, emit_z_stream, simulate_records_with, simulate_with, E11Check, SimOptions,
    SimSummary,
};
use hqkd_core::optimize::{linear_grid, run_sweep, SweepRow};
use hqkd_core::pnr::{reconstruct, split_p1n, ReconstructionReport, ZSampleSet};
use hqkd_core::{Analysis, DetectionMode, Objective, PhotonNumberDistribution, SweepConfig, Threshold};
use serde::Serialize;

use crate::args::*;
use crate::output::{csv_writer, num, open, opt};

pub const DETECTOR_HEADER: [&str; 4] = ["tau", "eta_d", "upsilon_d", "ratio"];
pub const MUTUAL_INFO_HEADER: [&str; 4] = ["length_km", "mode", "tau_opt", "I_AB"];
pub const KEYRATE_HEADER: [&str; 9] = ["length_km", "tau", "rate", "q", "e", "q10", "q11", "e_uxv", "eve_info"];

pub fn detector_rows(args: &DetectorCurvesArgs) -> Result<Vec<Vec<String>>> {
    let grid = linear_grid(args.tau.start, args.tau.end, args.tau.step)?
        .into_iter()
        .map(Threshold::new)
        .collect::<hqkd_core::Result<Vec<_>>>()?;
    Ok(detector_curves(&grid)
        .into_iter()
        .map(|p| vec![num(p.tau.value()), num(p.eta_d), num(p.upsilon_d), num(p.ratio)])
        .collect())
}

pub fn mutual_info_rows(args: &MutualInfoArgs) -> Result<Vec<Vec<String>>> {
    let modes = match args.mode {
        Some(m) => vec![m],
        None => vec![DetectionMode::PerfectSpd, DetectionMode::Independent, DetectionMode::Differential],
    };
    let lengths = linear_grid(args.sweep.start, args.sweep.end, args.sweep.step)?;
    let mut rows = Vec::new();
    for mode in modes {
        let scenario = ScenarioArgs {
            mode,
            e_d: 0.0,
            gamma: args.gamma,
            f_ec: 1.0,
        };
        let config = SweepConfig {
            scenario: scenario.fiber(0.0, args.tau.template())?,
            objective: Objective::MutualInfo,
            lengths_km: lengths.clone(),
            tau: args.tau.choice(),
        };
        for r in run_sweep(&config)? {
            rows.push(vec![num(r.length_km), mode.to_string(), opt(r.tau_opt), num(r.objective_value)]);
        }
    }
    Ok(rows)
}

pub fn objective_for(analysis: Analysis) -> Objective {
    match analysis {
        Analysis::Standard => Objective::StandardRate,
        Analysis::Improved => Objective::ImprovedRate,
        Analysis::ImprovedTight => Objective::ImprovedTightRate,
    }
}

pub fn sweep_rows(
    scenario: &ScenarioArgs,
    objective: Objective,
    lengths: Vec<f64>,
    tau: &TauArgs,
) -> Result<Vec<SweepRow>> {
    let config = SweepConfig {
        scenario: scenario.fiber(0.0, tau.template())?,
        objective,
        lengths_km: lengths,
        tau: tau.choice(),
    };
    Ok(run_sweep(&config)?)
}

pub fn keyrate_fields(r: &SweepRow) -> Vec<String> {
    let p = &r.point;
    vec![
        num(r.length_km),
        opt(r.tau_opt),
        num(r.objective_value),
        num(p.q),
        num(p.e),
        opt(p.q10),
        opt(p.q11),
        opt(p.e_uxv),
        opt(p.eve_info),
    ]
}

pub fn local_optima_field(r: &SweepRow) -> String {
    r.local_optima
        .iter()
        .map(|o| num(o.tau))
        .collect::<Vec<_>>()
        .join(";")
}

fn write_table<S: AsRef<str>>(out: Option<&Path>, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(out)?;
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn detector_curves_cmd(args: &DetectorCurvesArgs, out: Option<&Path>) -> Result<()> {
    write_table(out, &DETECTOR_HEADER, &detector_rows(args)?)
}

pub fn mutual_info_cmd(args: &MutualInfoArgs, out: Option<&Path>) -> Result<()> {
    write_table(out, &MUTUAL_INFO_HEADER, &mutual_info_rows(args)?)
}

pub fn keyrate_cmd(args: &KeyrateArgs, out: Option<&Path>) -> Result<()> {
    let rows = sweep_rows(&args.scenario, objective_for(args.analysis), args.distance.lengths()?, &args.tau)?;
    let mut header: Vec<&str> = KEYRATE_HEADER.to_vec();
    if args.pulse_rate.is_some() {
        header.push("rate_bps");
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut f = keyrate_fields(r);
            if let Some(rate) = args.pulse_rate {
                f.push(num(r.objective_value * rate));
            }
            f
        })
        .collect();
    write_table(out, &header, &table)
}

pub fn sweep_cmd(args: &SweepArgs, out: Option<&Path>) -> Result<()> {
    let rows = sweep_rows(&args.scenario, args.objective, args.distance.lengths()?, &args.tau)?;
    let mut header: Vec<&str> = KEYRATE_HEADER.to_vec();
    header.push("tau_local_optima");
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut f = keyrate_fields(r);
            f.push(local_optima_field(r));
            f
        })
        .collect();
    write_table(out, &header, &table)
}

#[derive(Serialize)]
struct MontecarloReport {
    summary: SimSummary,
    e11_check: Option<E11Check>,
}

pub fn montecarlo_cmd(args: &MontecarloArgs, out: Option<&Path>) -> Result<()> {
    let scenario = args.scenario()?;
    let options = SimOptions {
        batch_size: args.batch_size,
        ..SimOptions::default()
    };
    let summary = simulate_with(&scenario, args.pulses, args.seed, options)?;
    // too few single-photon events leaves the check out rather than failing the run
    let e11_check = e11_check_from(&summary, &scenario).ok();
    let mut w = open(out)?;
    serde_json::to_writer_pretty(&mut w, &MontecarloReport { summary, e11_check })?;
    writeln!(w)?;
    w.flush()?;

    if let Some(path) = &args.records {
        let records = simulate_records_with(&scenario, args.record_count, args.seed, options)?;
        let mut w = csv_writer(Some(path))?;
        for r in &records {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReconstructOutput {
    estimate: Vec<f64>,
    iterations: usize,
    final_delta: f64,
    log_likelihood: f64,
    stop: hqkd_core::pnr::StopReason,
    last_bin_mass: f64,
    p10: f64,
    p11: f64,
    p_multi: f64,
    samples: usize,
    tv_distance: Option<f64>,
}

fn read_samples(path: &Path) -> Result<ZSampleSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut zs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let z = line.parse::<f64>().map_err(|e| {
            hqkd_core::Error::domain(format!("{}:{}: '{line}': {e}", path.display(), i + 1))
        })?;
        zs.push(z);
    }
    Ok(ZSampleSet::new(zs)?)
}

fn tv_padded(a: &PhotonNumberDistribution, b: &[f64]) -> f64 {
    let len = a.probs().len().max(b.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..len).map(|i| (get(a.probs(), i) - get(b, i)).abs()).sum::<f64>()
}

pub fn reconstruct_cmd(args: &ReconstructArgs, out: Option<&Path>) -> Result<()> {
    let (samples, truth) = match (&args.input, &args.truth) {
        (Some(path), _) => (read_samples(path)?, None),
        (None, Some(weights)) => {
            let truth = PhotonNumberDistribution::new(weights.clone())?;
            (emit_z_stream(&truth, args.count, args.seed)?, Some(truth))
        }
        (None, None) => anyhow::bail!(hqkd_core::Error::domain("give --input or --truth")),
    };
    let report: ReconstructionReport = reconstruct(&samples, args.n_max, args.tol, args.max_iters)?;
    let (p10, p11, p_multi) = split_p1n(&report.estimate);
    let output = ReconstructOutput {
        tv_distance: truth.map(|t| tv_padded(&report.estimate, t.probs())),
        estimate: report.estimate.probs().to_vec(),
        iterations: report.iterations,
        final_delta: report.final_delta,
        log_likelihood: report.log_likelihood,
        stop: report.stop,
        last_bin_mass: report.last_bin_mass,
        p10,
        p11,
        p_multi,
        samples: samples.len(),
    };
    let mut w = open(out)?;
    serde_json::to_writer_pretty(&mut w, &output)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
