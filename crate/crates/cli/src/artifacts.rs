//! On-disk artifact schemas shared between pipeline stages.
//!
//! Stages communicate only through these files. Everything is JSON written
//! through serde with struct-declaration field order, so a stage rerun with
//! identical inputs reproduces identical bytes.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use multifuse_core::error::{Error, Result};
use multifuse_core::stats::TestResult;
use multifuse_core::train::{CvSummary, FoldReport};

pub const CONFIG_SNAPSHOT_FILE: &str = "config.snapshot";
pub const TRAIN_DIR: &str = "train";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FOLD_REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const EXPLAIN_DIR: &str = "explain";
pub const MAPS_DIR: &str = "maps";
pub const TOP_K_FILE: &str = "top_k.json";
pub const STATS_DIR: &str = "stats";
pub const STATS_CSV_FILE: &str = "stats.csv";
pub const STATS_JSON_FILE: &str = "stats.json";
pub const REPORT_DIR: &str = "report";

/// One trained fold: its report plus the checkpoint location, relative to the
/// run root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRecord {
    pub checkpoint: String,
    pub report: FoldReport,
}

/// `summary.json`: the cross-validation outcome for one model variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub modality: String,
    pub precision: String,
    pub summary: CvSummary,
    pub folds: Vec<FoldRecord>,
}

/// One ranked region in `top_k.json`. `index` is the region's row in the full
/// score table (ROI label minus one for volumes, node index for graphs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopKRegion {
    pub rank: usize,
    pub index: usize,
    pub region: String,
    pub pct_within: f64,
    pub pct_across: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopKModality {
    pub modality: String,
    pub all_zero: bool,
    pub regions: Vec<TopKRegion>,
}

/// `top_k.json`: what the explain stage selected, consumed by stats and
/// report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopKFile {
    pub fold: usize,
    pub target_class: String,
    pub k: usize,
    /// Subjects whose attribution maps were averaged.
    pub subjects: Vec<String>,
    pub modalities: Vec<TopKModality>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsModality {
    pub modality: String,
    pub results: Vec<TestResult>,
}

/// `stats.json`: machine-readable mirror of `stats.csv`, carrying the full
/// test results (U statistic and group sizes included).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsFile {
    pub alpha: f64,
    pub n_correct_neg: usize,
    pub n_correct_pos: usize,
    pub modalities: Vec<StatsModality>,
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::BadManifest {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a stage artifact, attributing absence to the stage that should have
/// produced it.
pub fn read_stage_json<V: DeserializeOwned>(
    path: &Path,
    needed: &'static str,
    stage: &'static str,
) -> Result<V> {
    if !path.is_file() {
        return Err(Error::MissingStage {
            needed,
            stage,
            detail: format!("{} not found", path.display()),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::BadManifest {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}
