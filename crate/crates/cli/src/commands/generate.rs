//! `generate`: write a seeded synthetic cohort.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use multifuse_core::cohort::{generate_cohort, ATLAS_FILE, MANIFEST_FILE};
use multifuse_core::config::RunConfig;
use multifuse_core::error::Result;

use crate::rundir::{claim_dir, seal_stage, sync_model_to_cohort, StageSeal};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output cohort directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config file supplying the [cohort] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Abeta-negative subject count (overrides the config file).
    #[arg(long)]
    pub n_neg: Option<usize>,
    /// Abeta-positive subject count (overrides the config file).
    #[arg(long)]
    pub n_pos: Option<usize>,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.cohort.seed = seed;
    }
    if let Some(n) = args.n_neg {
        cfg.cohort.n_neg = n;
    }
    if let Some(n) = args.n_pos {
        cfg.cohort.n_pos = n;
    }
    sync_model_to_cohort(&mut cfg);
    cfg.validate()?;

    claim_dir(&args.out, args.force)?;
    generate_cohort(&cfg.cohort, &args.out)?;

    let mut inputs = Vec::new();
    if let Some(path) = &args.config {
        inputs.push(("config".to_string(), path.display().to_string()));
    }
    seal_stage(StageSeal {
        dir: &args.out,
        subcommand: "generate",
        seed: cfg.cohort.seed,
        snapshot: cfg.snapshot(),
        inputs,
        outputs: vec![MANIFEST_FILE.to_string(), ATLAS_FILE.to_string()],
        started,
        timing: false,
    })
}
