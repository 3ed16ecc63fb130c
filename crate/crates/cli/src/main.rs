//! `magband`: band structure, semiclassical checks and gap-eigenvalue
//! counting driven by a JSON run configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cache;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{output_dir, Context};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "magband", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed recorded in the JSON metadata.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ignore and do not write the band cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sampled band functions E_1..E_J on the k-grid.
    Bands(Flags),
    /// Band edges and spectral gaps.
    Gaps(Flags),
    /// Band extrema with curvature and degeneracy flags.
    Extrema(Flags),
    /// Semiclassical constants and derivative bounds.
    Semiclassics(Flags),
    /// Gaussian decay of a translated Bloch eigenfunction.
    Decay(Flags),
    /// Eigenvalue counts in a gap over a λ-grid.
    Count(Flags),
    /// Birman–Schwinger reference counts.
    Oracle(Flags),
    /// Fitted slope of the counting law against its sandwich.
    Fitlaw(Flags),
}

impl Command {
    fn split(&self) -> (&'static str, &Flags) {
        match self {
            Command::Bands(f) => ("bands", f),
            Command::Gaps(f) => ("gaps", f),
            Command::Extrema(f) => ("extrema", f),
            Command::Semiclassics(f) => ("semiclassics", f),
            Command::Decay(f) => ("decay", f),
            Command::Count(f) => ("count", f),
            Command::Oracle(f) => ("oracle", f),
            Command::Fitlaw(f) => ("fitlaw", f),
        }
    }
}

fn run(name: &str, flags: &Flags) -> Result<Vec<PathBuf>, CliError> {
    let config = RunConfig::load(&flags.config)?;
    if let Some(n) = flags.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let out = output_dir(&config, flags.out.as_deref());
    Context::new(config, out, !flags.no_cache, flags.seed).run(name)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, flags) = cli.command.split();
    match run(name, flags) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("magband {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
