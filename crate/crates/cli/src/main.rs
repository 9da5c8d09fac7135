mod commands;
mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::Config;

#[derive(Parser, Debug)]
#[command(name = "repairlab", version, about = "Repair read-rate bounds, simulations and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file of `key = value` lines with [section] headers.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output CSV path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Trials per Monte Carlo check.
    #[arg(long, global = true, default_value_t = 100_000)]
    trials: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Table of lower bounds and slack terms over a grid of overheads.
    Bounds,
    /// Run one scenario and emit its metrics.
    Simulate,
    /// Run verification suites.
    Verify {
        /// all, supermartingale, distinct, geometric, rate or replay.
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Cross product of overheads, strategies and seeds.
    Sweep,
}

enum Status {
    Ok,
    Violation,
}

fn run(cli: &Cli) -> Result<Status> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => cfg.get_or("run.seed", 0)?,
    };
    let mut out: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let status = match &cli.command {
        Command::Bounds => commands::cmd_bounds(&cfg, &mut out).map(|_| Status::Ok),
        Command::Simulate => commands::cmd_simulate(&cfg, seed, &mut out).map(|_| Status::Ok),
        Command::Sweep => commands::cmd_sweep(&cfg, seed, &mut out).map(|_| Status::Ok),
        Command::Verify { suite } => commands::cmd_verify(&cfg, suite, seed, cli.trials, &mut out)
            .map(|bad| if bad { Status::Violation } else { Status::Ok }),
    }?;
    out.flush()?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violation) => {
            eprintln!("error: at least one verification report is a violation");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
