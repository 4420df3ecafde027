//! `train`: stratified cross-validation over one or all model variants.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};

use multifuse_core::cohort::{load_cohort, CohortManifest, MANIFEST_FILE};
use multifuse_core::config::RunConfig;
use multifuse_core::error::{Error, Result};
use multifuse_core::model::{save_model, AnyModel};
use multifuse_core::model::{FusionModel, Modality, UnimodalModel};
use multifuse_core::train::{prepare_subjects, train_cv, Precision, PreparedSubject, TrainableModel};
use multifuse_core::Scalar;

use crate::artifacts::{
    write_json, FoldRecord, TrainSummary, CHECKPOINT_DIR, FOLD_REPORT_FILE, SUMMARY_FILE, TRAIN_DIR,
};
use crate::rundir::{claim_dir, seal_stage, sync_model_to_cohort, StageSeal, TOOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Multimodal,
    Volume,
    Functional,
    Structural,
    All,
}

impl ModalityArg {
    fn selection(self) -> Vec<&'static str> {
        match self {
            ModalityArg::Multimodal => vec!["multimodal"],
            ModalityArg::Volume => vec!["volume"],
            ModalityArg::Functional => vec!["functional"],
            ModalityArg::Structural => vec!["structural"],
            ModalityArg::All => vec!["multimodal", "volume", "functional", "structural"],
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cohort directory produced by `generate`.
    #[arg(long)]
    pub cohort: PathBuf,
    /// Config file; defaults apply where absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Training seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fold count (overrides the config file).
    #[arg(long)]
    pub folds: Option<usize>,
    /// Epoch count (overrides the config file).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Shrink the model and schedule to the fast desk-scale profile.
    #[arg(long)]
    pub desk_scale: bool,
    /// Which model variant to train.
    #[arg(long, value_enum, default_value_t = ModalityArg::Multimodal)]
    pub modality: ModalityArg,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if args.desk_scale {
        cfg.apply_desk_scale();
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = args.folds {
        cfg.train.folds = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }

    if !args.cohort.join(MANIFEST_FILE).is_file() {
        return Err(Error::MissingStage {
            needed: "cohort directory",
            stage: "generate",
            detail: format!("{} has no {MANIFEST_FILE}", args.cohort.display()),
        });
    }
    let manifest = CohortManifest::load(&args.cohort)?;
    cfg.cohort = manifest.spec.clone();
    sync_model_to_cohort(&mut cfg);
    cfg.validate()?;

    claim_dir(&args.out, args.force)?;

    let selection = args.modality.selection();
    let outputs = match cfg.train.precision {
        Precision::F32 => train_all::<f32>(&cfg, &args.cohort, &args.out, &selection)?,
        Precision::F64 => train_all::<f64>(&cfg, &args.cohort, &args.out, &selection)?,
    };

    let mut inputs = vec![("cohort".to_string(), args.cohort.display().to_string())];
    if let Some(path) = &args.config {
        inputs.push(("config".to_string(), path.display().to_string()));
    }
    seal_stage(StageSeal {
        dir: &args.out,
        subcommand: "train",
        seed: cfg.train.seed,
        snapshot: cfg.snapshot(),
        inputs,
        outputs,
        started,
        timing: true,
    })
}

fn train_all<T: Scalar>(
    cfg: &RunConfig,
    cohort_dir: &Path,
    out: &Path,
    selection: &[&'static str],
) -> Result<Vec<String>> {
    let loaded = load_cohort::<T>(cohort_dir)?;
    let prepared = prepare_subjects(&cfg.model, &loaded.subjects)?;
    let mut outputs = Vec::new();
    for &name in selection {
        let model_cfg = cfg.model.clone();
        let mut outs = match name {
            "multimodal" => cv_to_disk(
                cfg,
                &prepared,
                name,
                |_, seed| FusionModel::<T>::init(model_cfg.clone(), seed),
                AnyModel::Fusion,
                out,
            )?,
            _ => {
                let kind = match name {
                    "volume" => Modality::Volume,
                    "functional" => Modality::Functional,
                    "structural" => Modality::Structural,
                    other => unreachable!("unknown modality {other}"),
                };
                cv_to_disk(
                    cfg,
                    &prepared,
                    name,
                    move |_, seed| UnimodalModel::<T>::init(kind, model_cfg.clone(), seed),
                    AnyModel::Unimodal,
                    out,
                )?
            }
        };
        outputs.append(&mut outs);
    }
    Ok(outputs)
}

/// Trains one variant and lays its folds out under `train/<name>/`.
fn cv_to_disk<T, M, I, W>(
    cfg: &RunConfig,
    prepared: &[PreparedSubject<T>],
    name: &str,
    init: I,
    wrap: W,
    run_root: &Path,
) -> Result<Vec<String>>
where
    T: Scalar,
    M: TrainableModel<T>,
    I: Fn(usize, u64) -> Result<M> + Sync,
    W: Fn(M) -> AnyModel<T>,
{
    let outcome = train_cv(&cfg.train, prepared, init)?;
    let dir = run_root.join(TRAIN_DIR).join(name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut outputs = Vec::new();
    let mut folds = Vec::with_capacity(outcome.folds.len());
    for fold in outcome.folds {
        let rel = format!("{TRAIN_DIR}/{name}/fold-{}", fold.report.fold);
        let fold_dir = run_root.join(&rel);
        let ckpt_dir = fold_dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        save_model(&wrap(fold.model), &ckpt_dir)?;
        write_json(&fold_dir.join(FOLD_REPORT_FILE), &fold.report)?;
        outputs.push(format!("{rel}/{FOLD_REPORT_FILE}"));
        outputs.push(format!("{rel}/{CHECKPOINT_DIR}"));
        folds.push(FoldRecord {
            checkpoint: format!("{rel}/{CHECKPOINT_DIR}"),
            report: fold.report,
        });
    }
    eprintln!(
        "[{TOOL}] train {name}: accuracy {:.3} +/- {:.3} (best fold {})",
        outcome.summary.accuracy.mean, outcome.summary.accuracy.std, outcome.summary.best_fold
    );
    let summary = TrainSummary {
        modality: name.to_string(),
        precision: cfg.train.precision.name().to_string(),
        summary: outcome.summary,
        folds,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    outputs.push(format!("{TRAIN_DIR}/{name}/{SUMMARY_FILE}"));
    Ok(outputs)
}
