mod args;
mod commands;
mod figures;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::Command;
use output::{manifest_path, RunManifest};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_STATISTICS: u8 = 4;

/// BB84 with conjugate homodyne detectors in photon-counting mode.
#[derive(Debug, Parser)]
#[command(name = "hqkd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the data here instead of stdout; a manifest is written next to it
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Manifest location, when it should not sit next to the data
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

fn execute(command: &Command, out: Option<&Path>, manifest: Option<&Path>) -> Result<()> {
    if let Command::Figures(a) = command {
        let files = figures::run(a)?;
        let path = manifest.map(Path::to_path_buf).unwrap_or_else(|| a.out_dir.join("manifest.json"));
        return RunManifest::new(command, files).write(&path);
    }
    match command {
        Command::DetectorCurves(a) => commands::detector_curves_cmd(a, out)?,
        Command::MutualInfo(a) => commands::mutual_info_cmd(a, out)?,
        Command::Keyrate(a) => commands::keyrate_cmd(a, out)?,
        Command::Sweep(a) => commands::sweep_cmd(a, out)?,
        Command::Montecarlo(a) => commands::montecarlo_cmd(a, out)?,
        Command::Reconstruct(a) => commands::reconstruct_cmd(a, out)?,
        Command::Replay(a) => {
            let recorded = RunManifest::read(&a.manifest).map_err(Usage)?;
            return execute(&recorded.parameters, out, manifest);
        }
        Command::Figures(_) => unreachable!(),
    }
    let mut outputs: Vec<String> = out.iter().map(|p| p.display().to_string()).collect();
    if let Command::Montecarlo(a) = command {
        outputs.extend(a.records.iter().map(|p| p.display().to_string()));
    }
    let target = manifest.map(Path::to_path_buf).or_else(|| out.map(manifest_path));
    if let Some(path) = target {
        RunManifest::new(command, outputs).write(&path)?;
    }
    Ok(())
}

/// An error in how the tool was invoked rather than in the inputs' values.
#[derive(Debug)]
struct Usage(anyhow::Error);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use hqkd_core::Error as E;
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::Statistics(_) | E::InsufficientData { .. }) => EXIT_STATISTICS,
        Some(E::Invariant(_)) => EXIT_RUNTIME,
        Some(_) => EXIT_DOMAIN,
        None => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command, cli.out.as_deref(), cli.manifest.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
