// `!(x > y)` comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use commands::{GenerateArgs, SpectrumArgs};
use config::{DetectArgs, RunConfig};
use error::CliError;

/// Moving-window estimation of latent factor count and AR(1) noise correlation.
#[derive(Debug, Parser)]
#[command(name = "factor-events", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep windows over an input file or synthetic runs and write timelines and a report.
    Detect(Box<DetectArgs>),
    /// Write the model eigenvalue density for one (b, c) pair.
    Spectrum(SpectrumArgs),
    /// Write one synthetic source as CSV.
    Generate(GenerateArgs),
}

fn run(cli: Cli) -> Result<Vec<std::path::PathBuf>, CliError> {
    match cli.command {
        Command::Detect(args) => commands::run_detect(&RunConfig::resolve(*args)?),
        Command::Spectrum(args) => commands::run_spectrum(&args),
        Command::Generate(args) => commands::run_generate(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version requests
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let e = CliError::Config(e.render().to_string().trim().to_string());
            eprintln!("{}", e.record());
            return ExitCode::from(e.exit_code());
        }
    };
    match run(cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}
