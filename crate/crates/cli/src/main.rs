//! `mcforecast` command-line interface.
//!
//! Exit codes: 0 on success, 1 on a numerical failure, 2 on bad usage or
//! I/O errors.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Flags, RunConfig};

#[derive(Parser)]
#[command(name = "mcforecast", version, about = "Binary sensor-state forecasting by kernelized matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic day panels
    Simulate(Flags),
    /// Fit the boosted ensemble and write the model and diagnostics
    Fit(Flags),
    /// Emit thresholded forecasts and raw scores from a saved model
    Predict(Flags),
    /// Score a saved model against held-out truth and the baselines
    Evaluate(Flags),
    /// Fit and evaluate over a grid of lags and horizons
    Sweep(Flags),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (flags, action): (&Flags, fn(&RunConfig) -> anyhow::Result<()>) = match &cli.command {
        Command::Simulate(f) => (f, commands::simulate),
        Command::Fit(f) => (f, commands::fit),
        Command::Predict(f) => (f, commands::predict),
        Command::Evaluate(f) => (f, commands::evaluate),
        Command::Sweep(f) => (f, commands::sweep),
    };
    let cfg = RunConfig::resolve(flags)?;
    action(&cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err
        .chain()
        .filter_map(|e| e.downcast_ref::<mcforecast::Error>())
        .any(|e| e.is_numeric());
    if numeric {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
