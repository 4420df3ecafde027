//! `metrics`: per-subject graph measures over a cohort.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use multifuse_core::cohort::{load_cohort, MANIFEST_FILE};
use multifuse_core::config::RunConfig;
use multifuse_core::connectomics::{betweenness, node_strength};
use multifuse_core::error::{Error, Result};
use multifuse_core::report::pe;

use crate::rundir::{claim_files, seal_stage, sync_model_to_cohort, StageSeal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// Signed edge-weight sums on the functional matrices.
    Strength,
    /// Weighted betweenness centrality on the structural matrices.
    Betweenness,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Cohort directory produced by `generate`.
    #[arg(long)]
    pub cohort: PathBuf,
    /// Which node metric to compute.
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// Comma-separated node indices (default: every node).
    #[arg(long)]
    pub nodes: Option<String>,
    /// Sum absolute edge weights for strength.
    #[arg(long)]
    pub absolute: bool,
    /// Divide betweenness by (n-1)(n-2)/2.
    #[arg(long)]
    pub normalized: bool,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &MetricsArgs) -> Result<()> {
    let started = Instant::now();
    if !args.cohort.join(MANIFEST_FILE).is_file() {
        return Err(Error::MissingStage {
            needed: "cohort directory",
            stage: "generate",
            detail: format!("{} has no {MANIFEST_FILE}", args.cohort.display()),
        });
    }
    let loaded = load_cohort::<f64>(&args.cohort)?;

    let names = match args.metric {
        MetricArg::Strength => &loaded.manifest.fnc_node_names,
        MetricArg::Betweenness => &loaded.manifest.sc_node_names,
    };
    let nodes = match &args.nodes {
        None => (0..names.len()).collect(),
        Some(list) => parse_nodes(list, names.len())?,
    };

    let rows: Vec<Vec<f64>> = loaded
        .subjects
        .par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let values = match args.metric {
                MetricArg::Strength => node_strength(&s.fnc, args.absolute),
                MetricArg::Betweenness => betweenness(&s.sc, args.normalized)?,
            };
            Ok(nodes.iter().map(|&i| values[i]).collect())
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("subject,label");
    for &i in &nodes {
        csv.push(',');
        csv.push_str(&names[i]);
    }
    csv.push('\n');
    for (s, values) in loaded.subjects.iter().zip(&rows) {
        write!(csv, "{},{}", s.id, s.label.name()).unwrap();
        for v in values {
            write!(csv, ",{}", pe(*v)).unwrap();
        }
        csv.push('\n');
    }

    let out_dir = match args.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let csv_name = args
        .out
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Usage(format!("--out {}: not a file path", args.out.display())))?
        .to_string();
    claim_files(&out_dir, &[&csv_name], args.force)?;
    std::fs::write(&args.out, csv).map_err(|e| Error::io(&args.out, e))?;

    let mut cfg = RunConfig::default();
    cfg.cohort = loaded.manifest.spec.clone();
    sync_model_to_cohort(&mut cfg);
    seal_stage(StageSeal {
        dir: &out_dir,
        subcommand: "metrics",
        seed: cfg.cohort.seed,
        snapshot: cfg.snapshot(),
        inputs: vec![("cohort".to_string(), args.cohort.display().to_string())],
        outputs: vec![csv_name],
        started,
        timing: true,
    })
}

fn parse_nodes(list: &str, n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let idx: usize = part
            .parse()
            .map_err(|_| Error::Usage(format!("--nodes: {part:?} is not a node index")))?;
        if idx >= n {
            return Err(Error::Usage(format!("--nodes: index {idx} out of 0..{n}")));
        }
        out.push(idx);
    }
    if out.is_empty() {
        return Err(Error::Usage("--nodes: empty list".to_string()));
    }
    Ok(out)
}
