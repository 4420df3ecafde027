//! `stats`: Mann-Whitney group comparison of the top attributed regions.
//!
//! Features follow the attribution wiring: mean gray-matter intensity inside
//! each top volume ROI, signed node strength for functional nodes, and
//! betweenness centrality for structural nodes, each computed from the raw
//! cohort data of every correctly classified subject (pooled over the
//! evaluation folds, where each subject is predicted exactly once).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;

use multifuse_core::cohort::{load_cohort, Label, LoadedCohort, SubjectData};
use multifuse_core::connectomics::{betweenness, node_strength};
use multifuse_core::error::{Error, Result};
use multifuse_core::report::{f6, pe};
use multifuse_core::stats::group_compare;

use crate::artifacts::{
    read_stage_json, write_json, StatsFile, StatsModality, TopKFile, TopKModality, EXPLAIN_DIR,
    STATS_CSV_FILE, STATS_DIR, STATS_JSON_FILE, SUMMARY_FILE, TOP_K_FILE, TRAIN_DIR,
};
use crate::rundir::{claim_files, load_train_run, seal_stage, StageSeal};

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Training run directory.
    #[arg(long)]
    pub run: PathBuf,
    /// Cohort directory (default: the path recorded by `train`).
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Explain output directory (default: <run>/explain).
    #[arg(long)]
    pub explain: Option<PathBuf>,
    /// Significance level for the FDR threshold (default from config).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output CSV path (default: <run>/stats/stats.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &StatsArgs) -> Result<()> {
    let started = Instant::now();
    let run = load_train_run(&args.run)?;
    let explain_dir = args
        .explain
        .clone()
        .unwrap_or_else(|| args.run.join(EXPLAIN_DIR));
    let topk: TopKFile = read_stage_json(
        &explain_dir.join(TOP_K_FILE),
        "attribution top-k list",
        "explain",
    )?;
    let summary = run.summary("multimodal")?;
    let cohort_dir = run.cohort_dir(args.cohort.as_deref())?;

    let mut cfg = run.config.clone();
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    let alpha = cfg.alpha;

    let out_csv = args
        .out
        .clone()
        .unwrap_or_else(|| args.run.join(STATS_DIR).join(STATS_CSV_FILE));
    let out_dir = match out_csv.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let csv_name = out_csv
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Usage(format!("--out {}: not a file path", out_csv.display())))?
        .to_string();
    claim_files(&out_dir, &[&csv_name, STATS_JSON_FILE], args.force)?;

    // Pooled out-of-fold predictions: each subject is evaluated exactly once.
    let mut verdicts: HashMap<String, bool> = HashMap::new();
    for fold in &summary.folds {
        for p in &fold.report.predictions {
            if verdicts.insert(p.id.clone(), p.correct).is_some() {
                return Err(Error::BadManifest {
                    path: args.run.join(TRAIN_DIR).join("multimodal").join(SUMMARY_FILE),
                    detail: format!("subject {} appears in multiple evaluation folds", p.id),
                });
            }
        }
    }

    let loaded = load_cohort::<f64>(&cohort_dir)?;
    let correct: Vec<&SubjectData<f64>> = loaded
        .subjects
        .iter()
        .filter(|s| verdicts.get(&s.id).copied().unwrap_or(false))
        .collect();
    let neg: Vec<&SubjectData<f64>> = correct
        .iter()
        .copied()
        .filter(|s| s.label == Label::Neg)
        .collect();
    let pos: Vec<&SubjectData<f64>> = correct
        .iter()
        .copied()
        .filter(|s| s.label == Label::Pos)
        .collect();
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::EmptySample(
            "one class has no correctly classified subjects",
        ));
    }

    let mut csv = String::from("modality,region,percentage,p,p_fdr,direction\n");
    let mut modalities = Vec::with_capacity(topk.modalities.len());
    for tm in &topk.modalities {
        let names: Vec<String> = tm.regions.iter().map(|r| r.region.clone()).collect();
        let indices: Vec<usize> = tm.regions.iter().map(|r| r.index).collect();
        let neg_rows = feature_rows(&loaded, &neg, tm, &indices)?;
        let pos_rows = feature_rows(&loaded, &pos, tm, &indices)?;
        let results = group_compare(&names, &neg_rows, &pos_rows, alpha)?;
        for (region, tr) in tm.regions.iter().zip(&results) {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                tm.modality,
                tr.feature,
                f6(region.pct_within),
                pe(tr.p),
                pe(tr.p_fdr),
                tr.direction.label()
            )
            .unwrap();
        }
        modalities.push(StatsModality {
            modality: tm.modality.clone(),
            results,
        });
    }

    std::fs::write(&out_csv, csv).map_err(|e| Error::io(&out_csv, e))?;
    write_json(
        &out_dir.join(STATS_JSON_FILE),
        &StatsFile {
            alpha,
            n_correct_neg: neg.len(),
            n_correct_pos: pos.len(),
            modalities,
        },
    )?;

    seal_stage(StageSeal {
        dir: &out_dir,
        subcommand: "stats",
        seed: cfg.train.seed,
        snapshot: cfg.snapshot(),
        inputs: vec![
            ("run".to_string(), args.run.display().to_string()),
            ("explain".to_string(), explain_dir.display().to_string()),
            ("cohort".to_string(), cohort_dir.display().to_string()),
        ],
        outputs: vec![csv_name, STATS_JSON_FILE.to_string()],
        started,
        timing: true,
    })
}

/// Per-feature rows (one row per selected region, one column per subject) of
/// the modality's statistical feature.
fn feature_rows(
    loaded: &LoadedCohort<f64>,
    subjects: &[&SubjectData<f64>],
    tm: &TopKModality,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let per_subject: Vec<Vec<f64>> = subjects
        .par_iter()
        .map(|s| -> Result<Vec<f64>> {
            match tm.modality.as_str() {
                "volume" => loaded.atlas.roi_means(&s.vol),
                "functional" => Ok(node_strength(&s.fnc, false)),
                "structural" => betweenness(&s.sc, false),
                other => Err(Error::BadManifest {
                    path: PathBuf::from(TOP_K_FILE),
                    detail: format!("unknown modality {other:?}"),
                }),
            }
        })
        .collect::<Result<_>>()?;

    let n = per_subject.first().map_or(0, Vec::len);
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::BadManifest {
            path: PathBuf::from(TOP_K_FILE),
            detail: format!(
                "{} region index {bad} out of range for this cohort ({n} regions); \
                 the explain output and the cohort are out of sync",
                tm.modality
            ),
        });
    }
    Ok(indices
        .iter()
        .map(|&i| per_subject.iter().map(|v| v[i]).collect())
        .collect())
}
