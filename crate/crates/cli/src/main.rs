//! `hslab`: experiment runner for the hard-sphere laboratory.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use config::{parse_assignment, parse_pairs, Command, RunConfig};
use error::{CliError, CliResult};
use output::Artifacts;

#[derive(Parser, Debug)]
#[command(name = "hslab", version, about = "Reproducible hard-sphere experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Parameter override, repeatable; later wins.
    #[arg(long = "set", value_parser = parse_assignment)]
    set: Vec<(String, serde_json::Value)>,
}

fn build_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut pairs = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend(cli.set.iter().cloned());
    if let Some(seed) = cli.seed {
        pairs.push(("seed".into(), seed.into()));
    }
    if let Some(out) = &cli.out {
        pairs.push(("out".into(), out.display().to_string().into()));
    }
    RunConfig::from_pairs(Some(cli.command), pairs)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = build_config(cli)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let start = Instant::now();
    let mut artifacts = Artifacts::default();
    let params = commands::run(&cfg, &mut artifacts)?;
    let files = artifacts.write(&cfg, &params.resolved(), cli.workers, start.elapsed().as_secs_f64())?;
    eprintln!("hslab {}: wrote {} to {}", cfg.command, files.join(", "), cfg.output_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
