//! `pf` — command-line driver for the seizure-forecasting pipeline.

mod config;
mod provenance;
mod roc;
mod stages;

use anyhow::{Context, Result};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pf",
    version,
    about = "Seizure-forecasting pipeline: EDF in, evaluation reports out",
    arg_required_else_help = true
)]
struct Cli {
    /// Stage to run: ingest, preprocess, gan-train, gan-sample, sieve,
    /// train, protocol, eval, or report
    stage: String,
    /// Configuration file (`key = value` lines, dotted section prefixes)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory override
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Generate inputs from the bundled toy corpus instead of configured
    /// datasets
    #[arg(long)]
    toy: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !stages::STAGES.contains(&cli.stage.as_str()) {
        eprintln!("pf: unknown stage {:?}", cli.stage);
        eprintln!(
            "usage: pf <{}> [--config FILE] [--seed N] [--out DIR] [--toy]",
            stages::STAGES.join("|")
        );
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("pf: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Ok(threads) = std::env::var("PF_THREADS") {
        let n: usize = threads
            .parse()
            .with_context(|| format!("PF_THREADS must be a worker count, got {threads:?}"))?;
        // Ignore the error from setting the pool twice (tests call run()
        // repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let mut config = match &cli.config {
        Some(path) => config::load_config(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => config::PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    config.validate()?;

    stages::run_stage(&cli.stage, &stages::StageContext { config, toy: cli.toy })
}
