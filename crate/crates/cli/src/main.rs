mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{AuditFailure, EigenMode, PeriodicMode, StartFrom};
use config::{parse_config, ConfigErrors};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_AUDIT: u8 = 4;

/// Simulate and analyse a pulsed stage-structured population with free boundaries.
#[derive(Parser)]
#[command(name = "pulsefront", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output file, or output directory for simulate and sweep
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with code 4 when the invariant audit records a violation
    #[arg(long, global = true)]
    audit: bool,
    /// Treat failed hypothesis checks as errors
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the free-boundary problem, or the fixed-domain problem with --fixed
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, num_args = 2, value_names = ["L1", "L2"], allow_negative_numbers = true)]
        fixed: Option<Vec<f64>>,
    },
    /// Principal eigenvalues on the configured interval
    Eigen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "floquet")]
        mode: EigenMode,
    },
    /// Positive periodic solutions
    Periodic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "spatial")]
        mode: PeriodicMode,
        #[arg(long, value_enum, default_value = "upper")]
        start: StartFrom,
    },
    /// Simulate and classify the long-time outcome
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Bracket the critical total expansion rate
    Threshold {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        bracket: Option<Vec<f64>>,
    },
    /// Evaluate a task over the [sweep] grid in parallel
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

fn pair(v: Option<Vec<f64>>) -> Option<(f64, f64)> {
    v.map(|v| (v[0], v[1]))
}

fn run(cli: Cli) -> Result<u8> {
    let out = cli.out.as_deref();
    let dir = |default: &'static str| out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(default));
    let load = |path: &Path| -> Result<config::RunConfig> {
        let cfg = parse_config(path, cli.strict)?;
        for w in &cfg.warnings {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    };
    match cli.command {
        Command::Simulate { config, fixed } => {
            commands::simulate(&load(&config)?, pair(fixed), &dir("pulsefront-out"), cli.audit)?
        }
        Command::Eigen { config, mode } => commands::eigen(&load(&config)?, mode, out)?,
        Command::Periodic { config, mode, start } => commands::periodic(&load(&config)?, mode, start, out)?,
        Command::Classify { config } => commands::classify(&load(&config)?, out, cli.audit)?,
        Command::Threshold { config, ratio, bracket } => {
            commands::threshold(&load(&config)?, ratio, pair(bracket), out)?
        }
        Command::Sweep { config } => {
            let failures = commands::sweep(&load(&config)?, &dir("pulsefront-sweep"))?;
            if failures > 0 {
                eprintln!("error: {failures} sweep point(s) failed; see manifest.json");
                return Ok(EXIT_NUMERIC);
            }
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigErrors>().is_some() {
        return EXIT_CONFIG;
    }
    if err.downcast_ref::<AuditFailure>().is_some() {
        return EXIT_AUDIT;
    }
    match err.downcast_ref::<pulsefront::Error>() {
        Some(
            pulsefront::Error::InvalidParams(_)
            | pulsefront::Error::InvalidKernel(_)
            | pulsefront::Error::Stability { .. }
            | pulsefront::Error::HypothesisViolated { .. },
        ) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
