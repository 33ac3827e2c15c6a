//! Configuration-driven experiment runner.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ConfigError, RunConfig};
pub use run::{CommandOutput, RunError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "torus-spde", version, about = "Spectral Galerkin SPDE experiments on the 1-d torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate sample paths and write norm snapshots.
    Simulate(CommonArgs),
    /// Run the checks listed in `experiment.checks` and write a report.
    Verify(CommonArgs),
    /// Run the Burgers splitting pipeline over an ensemble of seeds.
    Burgers(CommonArgs),
    /// Fit Hölder exponents of the stochastic heat equation.
    Regularity(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Path to the TOML config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Overrides `experiment.base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Self::Simulate(a) | Self::Verify(a) | Self::Burgers(a) | Self::Regularity(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Verify(_) => "verify",
            Self::Burgers(_) => "burgers",
            Self::Regularity(_) => "regularity",
        }
    }
}

/// Loads the config, applies overrides and runs `command`, returning the exit status.
pub fn execute(command: &Command) -> i32 {
    let args = command.args();
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        cfg.experiment.base_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    let result = match command {
        Command::Simulate(_) => run::run_simulate(&cfg),
        Command::Verify(_) => run::run_verify(&cfg),
        Command::Burgers(_) => run::run_burgers(&cfg),
        Command::Regularity(_) => run::run_regularity(&cfg),
    };
    match result {
        Ok(out) => {
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.all_passed {
                EXIT_OK
            } else {
                eprintln!("{}: one or more checks failed", command.name());
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("{}: {e}", command.name());
            e.exit_code()
        }
    }
}
