use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hqkd_core::{DetectionMode, Objective};

use crate::args::{DetectorCurvesArgs, FiguresArgs, MutualInfoArgs, Range, ScenarioArgs, TauArgs};
use crate::commands::{
    detector_rows, keyrate_fields, local_optima_field, mutual_info_rows, sweep_rows,
    DETECTOR_HEADER, KEYRATE_HEADER, MUTUAL_INFO_HEADER,
};
use crate::output::{csv_writer, num, opt};

pub const FIGURES: [&str; 8] = ["fig3", "fig4", "fig5", "fig7", "fig8", "fig9", "fig10", "fig11"];

const E_D_PRESETS: [f64; 3] = [0.0, 0.01, 0.05];
const MAX_KM: f64 = 100.0;
const STEP_KM: f64 = 0.1;

struct Curve {
    mode: DetectionMode,
    objective: Objective,
    e_d: f64,
}

fn optimized() -> TauArgs {
    TauArgs {
        tau: None,
        optimize_tau: true,
        tau_min: hqkd_core::optimize::DEFAULT_TAU_MIN,
        tau_max: hqkd_core::optimize::DEFAULT_TAU_MAX,
        tau_step: hqkd_core::optimize::DEFAULT_COARSE_STEP,
    }
}

fn lengths() -> Result<Vec<f64>> {
    Ok(hqkd_core::optimize::linear_grid(0.0, MAX_KM, STEP_KM)?)
}

fn scenario(mode: DetectionMode, e_d: f64) -> ScenarioArgs {
    ScenarioArgs {
        mode,
        e_d,
        gamma: hqkd_core::protocol::DEFAULT_GAMMA_DB_PER_KM,
        f_ec: 1.0,
    }
}

fn write_rates(path: &Path, curves: &[Curve]) -> Result<()> {
    let mut w = csv_writer(Some(path))?;
    let mut header = vec!["mode", "objective", "e_d"];
    header.extend(KEYRATE_HEADER);
    header.push("tau_local_optima");
    w.write_record(&header)?;
    for c in curves {
        for r in sweep_rows(&scenario(c.mode, c.e_d), c.objective, lengths()?, &optimized())? {
            let mut rec = vec![c.mode.to_string(), c.objective.to_string(), num(c.e_d)];
            rec.extend(keyrate_fields(&r));
            rec.push(local_optima_field(&r));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn improved(mode: DetectionMode, objectives: &[Objective]) -> Vec<Curve> {
    let mut curves: Vec<Curve> = objectives
        .iter()
        .flat_map(|&objective| E_D_PRESETS.iter().map(move |&e_d| Curve { mode, objective, e_d }))
        .collect();
    curves.push(Curve {
        mode: DetectionMode::PerfectSpd,
        objective: Objective::ImprovedRate,
        e_d: 0.0,
    });
    curves
}

fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv_writer(Some(path))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn figure(name: &str, dir: &Path) -> Result<PathBuf> {
    let file = match name {
        "fig3" => "fig3_detector_curves.csv",
        "fig4" => "fig4_mutual_information.csv",
        "fig5" => "fig5_standard.csv",
        "fig7" => "fig7_independent_improved.csv",
        "fig8" => "fig8_optimal_tau.csv",
        "fig9" => "fig9_differential_improved.csv",
        "fig10" => "fig10_independent_tight.csv",
        "fig11" => "fig11_differential_tight.csv",
        other => anyhow::bail!("unknown figure '{other}'"),
    };
    let path = dir.join(file);
    let independent = DetectionMode::Independent;
    let differential = DetectionMode::Differential;
    match name {
        "fig3" => {
            let args = DetectorCurvesArgs {
                tau: Range {
                    start: 0.0,
                    end: 10.0,
                    step: 0.01,
                },
            };
            write_table(&path, &DETECTOR_HEADER, detector_rows(&args)?)?;
        }
        "fig4" => {
            let args = MutualInfoArgs {
                sweep: Range {
                    start: 0.0,
                    end: MAX_KM,
                    step: STEP_KM,
                },
                mode: None,
                gamma: hqkd_core::protocol::DEFAULT_GAMMA_DB_PER_KM,
                tau: optimized(),
            };
            write_table(&path, &MUTUAL_INFO_HEADER, mutual_info_rows(&args)?)?;
        }
        "fig5" => write_rates(
            &path,
            &[
                Curve {
                    mode: independent,
                    objective: Objective::StandardRate,
                    e_d: 0.0,
                },
                Curve {
                    mode: DetectionMode::PerfectSpd,
                    objective: Objective::StandardRate,
                    e_d: 0.0,
                },
            ],
        )?,
        "fig7" => write_rates(&path, &improved(independent, &[Objective::ImprovedRate]))?,
        "fig8" => {
            let mut rows = Vec::new();
            for e_d in E_D_PRESETS {
                let sweep = sweep_rows(&scenario(independent, e_d), Objective::ImprovedRate, lengths()?, &optimized())?;
                for r in sweep {
                    rows.push(vec![num(e_d), num(r.length_km), opt(r.tau_opt), num(r.objective_value), local_optima_field(&r)]);
                }
            }
            write_table(&path, &["e_d", "length_km", "tau_opt", "rate", "tau_local_optima"], rows)?;
        }
        "fig9" => write_rates(&path, &improved(differential, &[Objective::ImprovedRate]))?,
        "fig10" => write_rates(
            &path,
            &improved(independent, &[Objective::ImprovedTightRate, Objective::ImprovedRate]),
        )?,
        "fig11" => write_rates(
            &path,
            &improved(differential, &[Objective::ImprovedTightRate, Objective::ImprovedRate]),
        )?,
        _ => unreachable!(),
    }
    Ok(path)
}

/// Writes the selected figures into `args.out_dir`; returns the file names.
pub fn run(args: &FiguresArgs) -> Result<Vec<String>> {
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let selected: Vec<&str> = if args.only.is_empty() {
        FIGURES.to_vec()
    } else {
        FIGURES.iter().copied().filter(|f| args.only.iter().any(|o| o == f)).collect()
    };
    let mut files = Vec::new();
    for name in selected {
        let path = figure(name, &args.out_dir)?;
        files.push(path.file_name().unwrap().to_string_lossy().into_owned());
    }
    Ok(files)
}
