//! `report`: join the run's metrics, attribution percentages, and group
//! statistics into the final CSV and plain-text tables.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use multifuse_core::error::{Error, Result};
use multifuse_core::report::{metrics_csv, regions_csv, render_report, MetricsRow, RegionReportRow};

use crate::artifacts::{
    read_stage_json, StatsFile, TopKFile, TrainSummary, EXPLAIN_DIR, REPORT_DIR, STATS_DIR,
    STATS_JSON_FILE, SUMMARY_FILE, TOP_K_FILE, TRAIN_DIR,
};
use crate::rundir::{claim_dir, load_train_run, seal_stage, StageSeal};

/// Rendering order for trained variants; missing ones are skipped.
const VARIANTS: [&str; 4] = ["multimodal", "volume", "functional", "structural"];

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Training run directory.
    #[arg(long)]
    pub run: PathBuf,
    /// Explain output directory (default: <run>/explain).
    #[arg(long)]
    pub explain: Option<PathBuf>,
    /// Stats output directory (default: <run>/stats).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Output directory (default: <run>/report).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

fn section_title(modality: &str) -> String {
    match modality {
        "volume" => "Top volume ROIs (gray matter)".to_string(),
        "functional" => "Top functional nodes (FNC)".to_string(),
        "structural" => "Top structural nodes (SC)".to_string(),
        other => format!("Top {other} regions"),
    }
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let started = Instant::now();
    let run = load_train_run(&args.run)?;
    let explain_dir = args
        .explain
        .clone()
        .unwrap_or_else(|| args.run.join(EXPLAIN_DIR));
    let stats_dir = args
        .stats
        .clone()
        .unwrap_or_else(|| args.run.join(STATS_DIR));
    let topk: TopKFile = read_stage_json(
        &explain_dir.join(TOP_K_FILE),
        "attribution top-k list",
        "explain",
    )?;
    let stats: StatsFile = read_stage_json(
        &stats_dir.join(STATS_JSON_FILE),
        "group comparison results",
        "stats",
    )?;

    let out = args.out.clone().unwrap_or_else(|| args.run.join(REPORT_DIR));
    claim_dir(&out, args.force)?;

    let mut metrics: Vec<MetricsRow> = Vec::new();
    for name in VARIANTS {
        let path = args.run.join(TRAIN_DIR).join(name).join(SUMMARY_FILE);
        if path.is_file() {
            let s: TrainSummary = read_stage_json(&path, "cross-validation summary", "train")?;
            metrics.push((name.to_string(), s.summary));
        }
    }
    if metrics.is_empty() {
        return Err(Error::MissingStage {
            needed: "cross-validation summaries",
            stage: "train",
            detail: format!("no {SUMMARY_FILE} under {}", args.run.join(TRAIN_DIR).display()),
        });
    }

    let mut outputs = Vec::new();
    let mut sections = Vec::with_capacity(topk.modalities.len());
    for tm in &topk.modalities {
        let sm = stats.modalities.iter().find(|s| s.modality == tm.modality);
        let mut rows = Vec::with_capacity(tm.regions.len());
        for (i, region) in tm.regions.iter().enumerate() {
            let stat = sm.and_then(|s| s.results.get(i)).cloned();
            if let Some(t) = &stat {
                if t.feature != region.region {
                    return Err(Error::BadManifest {
                        path: stats_dir.join(STATS_JSON_FILE),
                        detail: format!(
                            "{} rank {}: stats tested {:?} but explain selected {:?}; \
                             the stats output is stale, rerun the stats stage",
                            tm.modality,
                            i + 1,
                            t.feature,
                            region.region
                        ),
                    });
                }
            }
            rows.push(RegionReportRow {
                region: region.region.clone(),
                pct_within: region.pct_within,
                pct_across: region.pct_across,
                stat,
            });
        }
        let csv_rel = format!("regions_{}.csv", tm.modality);
        let csv_path = out.join(&csv_rel);
        std::fs::write(&csv_path, regions_csv(&rows)).map_err(|e| Error::io(&csv_path, e))?;
        outputs.push(csv_rel);
        sections.push((section_title(&tm.modality), rows));
    }

    let metrics_path = out.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_csv(&metrics))
        .map_err(|e| Error::io(&metrics_path, e))?;
    outputs.insert(0, "metrics.csv".to_string());

    let text_path = out.join("report.txt");
    std::fs::write(&text_path, render_report(&metrics, &sections))
        .map_err(|e| Error::io(&text_path, e))?;
    outputs.push("report.txt".to_string());

    let mut cfg = run.config.clone();
    cfg.alpha = stats.alpha;
    seal_stage(StageSeal {
        dir: &out,
        subcommand: "report",
        seed: cfg.train.seed,
        snapshot: cfg.snapshot(),
        inputs: vec![
            ("run".to_string(), args.run.display().to_string()),
            ("explain".to_string(), explain_dir.display().to_string()),
            ("stats".to_string(), stats_dir.display().to_string()),
        ],
        outputs,
        started,
        timing: true,
    })
}
