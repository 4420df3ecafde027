//! Command-line front end for the multimodal fusion pipeline.
//!
//! Each subcommand is one pipeline stage. Stages communicate through run
//! directories: every stage writes a `run.manifest`, the resolved
//! `config.snapshot` it operated under, and its artifacts into its output
//! directory; downstream stages locate upstream artifacts through those
//! manifests. With equal seeds and inputs every stage reproduces its outputs
//! byte for byte.

pub mod artifacts;
pub mod commands;
pub mod rundir;

use clap::{Parser, Subcommand};

use multifuse_core::error::{Error, Result};

use crate::commands::explain::ExplainArgs;
use crate::commands::generate::GenerateArgs;
use crate::commands::metrics::MetricsArgs;
use crate::commands::report::ReportArgs;
use crate::commands::stats::StatsArgs;
use crate::commands::train::TrainArgs;

#[derive(Debug, Parser)]
#[command(
    name = "multifuse",
    version,
    about = "Multimodal volume + connectome classification pipeline"
)]
pub struct Cli {
    /// Worker thread cap (or env MULTIFUSE_THREADS; default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic cohort.
    Generate(GenerateArgs),
    /// Train cross-validated classifiers on a cohort.
    Train(TrainArgs),
    /// Extract guided-backprop attributions from a trained run.
    Explain(ExplainArgs),
    /// Per-subject graph metrics over a cohort.
    Metrics(MetricsArgs),
    /// Mann-Whitney group comparison of the top attributed regions.
    Stats(StatsArgs),
    /// Render the metrics summary and per-modality region tables.
    Report(ReportArgs),
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = resolve_threads(cli.threads)? {
        // Called before any parallel work, so the global pool cannot exist
        // yet; a failure here is a real usage problem.
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("--threads {n}: {e}")))?;
    }
    match &cli.command {
        Command::Generate(a) => commands::generate::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Explain(a) => commands::explain::run(a),
        Command::Metrics(a) => commands::metrics::run(a),
        Command::Stats(a) => commands::stats::run(a),
        Command::Report(a) => commands::report::run(a),
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("MULTIFUSE_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Error::Usage(format!(
                "MULTIFUSE_THREADS: cannot parse {s:?} as a thread count"
            ))),
        },
        Err(_) => Ok(None),
    }
}
