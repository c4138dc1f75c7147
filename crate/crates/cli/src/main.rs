use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::CliError;

#[derive(Parser)]
#[command(name = "contextda", version, about = "Window-sampling anomaly detection under domain shift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic source/target pair as CSV.
    Generate(Common),
    /// Train the detector and the window policy; write a checkpoint and report.
    Train(Common),
    /// Score the target series with a trained checkpoint.
    Evaluate(Common),
    /// Run every configured method for every seed.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file. Omit for defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed (overrides `seed` and `seeds`).
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint directory (default: <out>/checkpoint).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Generate(c) | Command::Train(c) | Command::Evaluate(c) | Command::Compare(c)) = &cli.command;
    let mut cfg = match &c.config {
        Some(p) => config::load(p),
        None => config::parse(""),
    }
    .map_err(|e| CliError::Invalid(e.0))?;
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.override_seed(seed);
    }
    let checkpoint = c.checkpoint.as_deref();
    match &cli.command {
        Command::Generate(_) => {
            for p in commands::cmd_generate(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Train(_) => print!("{}", commands::cmd_train(&cfg, checkpoint)?),
        Command::Evaluate(_) => print!("{}", commands::cmd_evaluate(&cfg, checkpoint)?),
        Command::Compare(_) => {
            let rows = commands::cmd_compare(&cfg)?;
            print!("{}", commands::results_csv(&rows, &cfg.methods, cfg.timing));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
