//! `lobgen` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{usage, write_manifest, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "lobgen", version, about = "Synthetic limit-order-book generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    events: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// LOBSTER files to a windowed dataset, deletion statistics and a baseline generator.
    Ingest(Common),
    /// Grid search over the agent parameters.
    Calibrate(Common),
    /// Trains the order-type, limit and market heads.
    Train(Common),
    /// Monte Carlo paths.
    Simulate(Common),
    /// Paired baseline and impact paths around an injected market buy.
    Impact(Common),
    /// Stylized facts of two mid-price CSVs.
    Facts {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Directory for the JSON summary and ACF tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(p) = common.paths {
        cfg.paths = p;
    }
    if let Some(e) = common.events {
        cfg.events = e;
    }
    if cfg.paths == 0 || cfg.events == 0 {
        return Err(usage("paths and events must be positive"));
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), CliError> {
    let (name, common) = match &command {
        Command::Facts { a, b, out } => {
            let report = commands::facts(a, b)?;
            match out {
                Some(dir) => {
                    commands::write_facts(&report, dir)?;
                }
                None => println!("{}", serde_json::to_string_pretty(&report).map_err(config::runtime)?),
            }
            return Ok(());
        }
        Command::Ingest(c) => ("ingest", c),
        Command::Calibrate(c) => ("calibrate", c),
        Command::Train(c) => ("train", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Impact(c) => ("impact", c),
    };
    let cfg = load(common)?;
    let outputs = match name {
        "ingest" => commands::ingest(&cfg)?,
        "calibrate" => commands::calibrate(&cfg)?,
        "train" => commands::train_heads(&cfg)?,
        "simulate" => commands::simulate(&cfg)?,
        _ => commands::impact(&cfg)?,
    };
    let manifest = write_manifest(name, &cfg, &outputs)?;
    println!("{}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            eprintln!("{}", usage(first).line());
            return ExitCode::from(1);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.kind.code() as u8)
        }
    }
}
