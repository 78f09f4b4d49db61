//! `dyve`: train a quantized task model, explore checker designs, attack the
//! deployed pair, and report the results.
//!
//! Exit codes: 0 success, 1 configuration error, 2 stage failure.

mod commands;
mod config;
mod ledger;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "dyve",
    version,
    about = "Dynamic verification of quantized classifiers under bit-flip faults"
)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(short, long, global = true, default_value = "dyve.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the quantized task model and save it with accuracy metadata.
    TrainTask,
    /// Run both design-exploration stages and write the deployable bundle.
    Explore,
    /// Attack the bundle with random faults and progressive bit search,
    /// comparing the verified pair against threshold checking.
    Attack,
    /// Summarize the artifacts in the output directory.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let config = match PipelineConfig::load(&cli.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::TrainTask => commands::cmd_train_task(&config),
        Command::Explore => commands::cmd_explore(&config),
        Command::Attack => commands::cmd_attack(&config),
        Command::Report => commands::cmd_report(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stage failed: {e:#}");
            ExitCode::from(2)
        }
    }
}
