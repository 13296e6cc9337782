mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{RunConfig, DEFAULT_CONFIG};
use crate::error::CliError;

/// Ground states and multi-peak states of logarithmic Schrödinger equations.
#[derive(Parser)]
#[command(name = "lognls", version)]
struct Cli {
    /// Configuration file (defaults to the built-in configuration).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a key, as section.key=value. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Constrained minimizer at run.alpha.
    Groundstate,
    /// Energy curve over run.alphas with concavity and subadditivity reports.
    Sweep,
    /// Multi-peak saddle state around run.centers.
    Multipeak,
    /// Gaussian decay rate of the ground state.
    Decay,
    /// Two-bump interaction deficit against separation.
    Interact,
    /// Gradient, flow, peak-selection and recurrence checks.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Groundstate => "groundstate",
            Command::Sweep => "sweep",
            Command::Multipeak => "multipeak",
            Command::Decay => "decay",
            Command::Interact => "interact",
            Command::Verify => "verify",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            RunConfig::parse(&text, &path.display().to_string())?
        }
        None => RunConfig::parse(DEFAULT_CONFIG, "<built-in>")?,
    };
    for o in &cli.overrides {
        config.apply_override(o)?;
    }
    if let Some(out) = &cli.out {
        config.apply_override(&format!("output.dir={}", out.display()))?;
    }
    let out = PathBuf::from(config.raw("output", "dir"));
    commands::prepare_output(&out)?;
    let ctx = Context {
        config,
        out,
        seed: cli.seed,
        command: cli.command.name().to_string(),
    };
    ctx.manifest()?;
    match cli.command {
        Command::Groundstate => commands::groundstate(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Multipeak => commands::multipeak(&ctx),
        Command::Decay => commands::decay(&ctx),
        Command::Interact => commands::interact(&ctx),
        Command::Verify => commands::verify(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lognls: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
