//! Command-line front end: config parsing, experiment runs and file output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use aipoc_core::{TuningProfile, Variant};
use clap::{Args, Parser, Subcommand};

pub use commands::{execute, Outcome, RunOptions};
pub use config::{Command, ConfigFile, ExperimentSpec, Overrides};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "aipoc",
    version,
    about = "LQG experiments on the inverted pendulum on a cart"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Cmd {
    /// One closed-loop run: trace, metrics and normalized errors.
    Simulate,
    /// Transient metrics over the update-ratio list.
    SweepRho,
    /// IAE, ITAE and steady-state error for both variants per update ratio.
    Compare,
    /// Settling time and control effort of the four tuning profiles.
    Profiles,
    /// Monte Carlo stability regions for both variants.
    StabilityMap,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::SweepRho => Command::SweepRho,
            Cmd::Compare => Command::Compare,
            Cmd::Profiles => Command::Profiles,
            Cmd::StabilityMap => Command::StabilityMap,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Opts {
    /// TOML file with [model], [weights], [filter], [sim] and [scan] sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the run and the scan.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_name = "ipoc|aipoc")]
    pub variant: Option<Variant>,
    /// Update ratio; replaces the sweep list with this single value.
    #[arg(long, global = true, value_name = "F")]
    pub rho: Option<f64>,
    #[arg(long, global = true, value_name = "NAME")]
    pub profile: Option<TuningProfile>,
    #[arg(long, global = true, value_name = "N")]
    pub samples: Option<usize>,
    /// Clip stability-map surface values above this bound.
    #[arg(long, global = true, value_name = "F")]
    pub surface_cap: Option<f64>,
}

impl Opts {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            variant: self.variant,
            rho: self.rho,
            profile: self.profile,
            samples: self.samples,
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<Outcome, CliError> {
    let spec = config::load(
        cli.opts.config.as_deref(),
        cli.command.into(),
        &cli.opts.overrides(),
        cli.opts.out.clone(),
    )?;
    let opts = RunOptions {
        surface_cap: cli.opts.surface_cap,
    };
    execute(&spec, &opts)
}

/// Parse arguments, run, print, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_cli(&cli) {
        Ok(outcome) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(outcome.table.as_bytes());
            let _ = writeln!(out, "wrote {} files to {}", outcome.files.len(), cli.opts.out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
