// SPDX-License-Identifier: Apache-2.0
//! `scarlab` command-line driver.

mod config;
mod manifest;
mod tasks;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scarlab::ScarError;

use config::{CommonArgs, DynamicsArgs, FlagSet, RunConfig, SectorArgs, SweepArgs, Task};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Cap(String),
    #[error("numerical failure: {0}")]
    Numerical(ScarError),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl From<ScarError> for CliError {
    fn from(e: ScarError) -> Self {
        match e {
            ScarError::DenseCapExceeded { dim, cap } => CliError::Cap(format!(
                "block dimension {dim} exceeds the dense cap {cap}; narrow the block with --sector/--momentum, \
                 request only the lowest levels with --lowest, or raise SCARLAB_DENSE_CAP"
            )),
            ScarError::InvalidConfig(m) => CliError::Config(m),
            e @ ScarError::SiteOutOfRange { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Cap(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) | CliError::Verify(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "scarlab", version, about = "Exact diagonalization of tunable scar models on spin-j chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of one block
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sector: SectorArgs,
        /// Compute only the lowest levels by Lanczos
        #[arg(long)]
        lowest: Option<usize>,
    },
    /// Level-spacing statistics of one block
    Rstat {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sector: SectorArgs,
    },
    /// Fidelity after a quench from a product state
    Dynamics {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sector: SectorArgs,
        #[command(flatten)]
        dynamics: DynamicsArgs,
    },
    /// Scar tower, entanglement and ladder analysis
    Scars {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sector: SectorArgs,
        /// Entanglement cut in sites (default N/2 rounded down)
        #[arg(long)]
        cut: Option<usize>,
    },
    /// Spin-1 to PXP mapping audit for N spin-1 sites
    PxpCheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Also compare the high-spin PXP chain with 2s = this value
        #[arg(long = "hpxp-two-s")]
        hpxp_two_s: Option<u32>,
        /// Physical sites of that chain (even)
        #[arg(long = "hpxp-sites")]
        hpxp_sites: Option<usize>,
    },
    /// Connectivity fragments within each pattern-count sector
    Fragments {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Grid over twoJ, a and theta
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sector: SectorArgs,
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Check every artifact listed in a run manifest
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Output directory holding manifest.json
    dir: PathBuf,
}

fn resolve(command: Command) -> Result<Option<RunConfig>, CliError> {
    let (task, flags) = match command {
        Command::Spectrum { common, sector, lowest } => (Task::Spectrum, FlagSet { common, sector, lowest, ..Default::default() }),
        Command::Rstat { common, sector } => (Task::Rstat, FlagSet { common, sector, ..Default::default() }),
        Command::Dynamics { common, sector, dynamics } => (Task::Dynamics, FlagSet { common, sector, dynamics, ..Default::default() }),
        Command::Scars { common, sector, cut } => (Task::Scars, FlagSet { common, sector, cut, ..Default::default() }),
        Command::PxpCheck { common, hpxp_two_s, hpxp_sites } => {
            (Task::PxpCheck, FlagSet { common, hpxp_two_s, hpxp_sites, ..Default::default() })
        }
        Command::Fragments { common } => (Task::Fragments, FlagSet { common, ..Default::default() }),
        Command::Sweep { common, sector, dynamics, sweep } => {
            (Task::Sweep, FlagSet { common, sector, dynamics, sweep, ..Default::default() })
        }
        Command::Verify(v) => {
            let report = manifest::verify(&v.dir)?;
            emit(&serde_json::to_string_pretty(&report).expect("serializable"));
            if !report.ok {
                return Err(CliError::Verify(format!("{} missing, {} mismatched", report.missing.len(), report.mismatched.len())));
            }
            return Ok(None);
        }
    };
    RunConfig::resolve(task, flags).map(Some)
}

/// Print to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn execute(command: Command) -> Result<(), CliError> {
    let Some(cfg) = resolve(command)? else {
        return Ok(());
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcome = tasks::run(&cfg)?;
    let m = manifest::write_outputs(&cfg, &outcome)?;
    if let Some(h) = &outcome.headline {
        emit(h);
    }
    emit(&serde_json::to_string_pretty(&outcome.summary).expect("serializable"));
    log::info!("wrote {} artifacts to {}", m.artifacts.len(), cfg.output.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
