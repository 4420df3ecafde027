//! `explain`: guided-backprop attribution for one fold's evaluation set.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use multifuse_core::attribution::{
    average_positive_map, guided_attribution, node_table, percentages, roi_aggregate, top_k,
    AttributionMap, RegionScoreTable,
};
use multifuse_core::cohort::{load_cohort, Label, SubjectData, MANIFEST_FILE};
use multifuse_core::error::{Error, Result};
use multifuse_core::mmt1;
use multifuse_core::model::{load_model, AnyModel};
use multifuse_core::model::{Modality, SubjectInput};
use multifuse_core::report::score_table_csv;
use multifuse_core::train::Precision;
use multifuse_core::Scalar;

use crate::artifacts::{
    write_json, TopKFile, TopKModality, TopKRegion, EXPLAIN_DIR, MAPS_DIR, TOP_K_FILE,
};
use crate::rundir::{claim_dir, load_train_run, seal_stage, StageSeal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    Pos,
    Neg,
}

impl ClassArg {
    fn target(self) -> usize {
        match self {
            ClassArg::Pos => 1,
            ClassArg::Neg => 0,
        }
    }

    fn label(self) -> Label {
        match self {
            ClassArg::Pos => Label::Pos,
            ClassArg::Neg => Label::Neg,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ClassArg::Pos => "pos",
            ClassArg::Neg => "neg",
        }
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Training run directory.
    #[arg(long)]
    pub run: PathBuf,
    /// Cohort directory (default: the path recorded by `train`).
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Fold to explain: `best` or a fold index.
    #[arg(long, default_value = "best")]
    pub fold: String,
    /// Class whose pre-softmax logit is attributed.
    #[arg(long, value_enum, default_value_t = ClassArg::Pos)]
    pub class: ClassArg,
    /// How many top regions to keep per modality (default from config).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output directory (default: <run>/explain).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &ExplainArgs) -> Result<()> {
    let started = Instant::now();
    let run = load_train_run(&args.run)?;
    let out = args.out.clone().unwrap_or_else(|| args.run.join(EXPLAIN_DIR));
    let cohort_dir = run.cohort_dir(args.cohort.as_deref())?;

    let summary = run.summary("multimodal")?;
    let fold_idx = match args.fold.as_str() {
        "best" => summary.summary.best_fold,
        s => s.parse::<usize>().map_err(|_| {
            Error::Usage(format!("--fold takes `best` or a fold index, got {s:?}"))
        })?,
    };
    let fold = summary
        .folds
        .iter()
        .find(|f| f.report.fold == fold_idx)
        .ok_or_else(|| {
            Error::Usage(format!(
                "fold {fold_idx} not in run ({} folds)",
                summary.folds.len()
            ))
        })?;

    let mut cfg = run.config.clone();
    let k = args.k.unwrap_or(cfg.explain_k);
    cfg.explain_k = k;

    // Subjects to attribute: the fold's correctly classified members of the
    // target class, in prediction (evaluation) order.
    let wanted: Vec<String> = fold
        .report
        .predictions
        .iter()
        .filter(|p| p.correct && p.label == args.class.label())
        .map(|p| p.id.clone())
        .collect();
    if wanted.is_empty() {
        return Err(Error::EmptySample(
            "no correctly classified subjects of the target class in this fold",
        ));
    }

    claim_dir(&out, args.force)?;

    let ckpt_dir = run.root.join(&fold.checkpoint);
    let computed = match cfg.train.precision {
        Precision::F32 => {
            explain_fold::<f32>(&cohort_dir, &ckpt_dir, &wanted, args.class.target(), &out)?
        }
        Precision::F64 => {
            explain_fold::<f64>(&cohort_dir, &ckpt_dir, &wanted, args.class.target(), &out)?
        }
    };
    let ExplainComputed { tables, mut outputs } = computed;

    let mut modalities = Vec::with_capacity(tables.len());
    for table in &tables {
        let order = top_k(table, k);
        let regions = order
            .iter()
            .enumerate()
            .map(|(i, &row)| {
                let r = &table.rows[row];
                TopKRegion {
                    rank: i + 1,
                    index: r.index,
                    region: r.name.clone(),
                    pct_within: r.pct_within,
                    pct_across: r.pct_across,
                }
            })
            .collect();
        modalities.push(TopKModality {
            modality: table.modality.name().to_string(),
            all_zero: table.all_zero,
            regions,
        });
        let csv_rel = format!("regions_{}.csv", table.modality.name());
        let csv_path = out.join(&csv_rel);
        std::fs::write(&csv_path, score_table_csv(table)).map_err(|e| Error::io(&csv_path, e))?;
        outputs.push(csv_rel);
    }

    let topk = TopKFile {
        fold: fold_idx,
        target_class: args.class.name().to_string(),
        k,
        subjects: wanted,
        modalities,
    };
    write_json(&out.join(TOP_K_FILE), &topk)?;
    outputs.push(TOP_K_FILE.to_string());

    seal_stage(StageSeal {
        dir: &out,
        subcommand: "explain",
        seed: cfg.train.seed,
        snapshot: cfg.snapshot(),
        inputs: vec![
            ("run".to_string(), args.run.display().to_string()),
            ("cohort".to_string(), cohort_dir.display().to_string()),
        ],
        outputs,
        started,
        timing: true,
    })
}

struct ExplainComputed {
    /// Volume, functional, structural; percentages completed.
    tables: Vec<RegionScoreTable>,
    outputs: Vec<String>,
}

fn explain_fold<T: Scalar>(
    cohort_dir: &Path,
    ckpt_dir: &Path,
    wanted: &[String],
    target: usize,
    out: &Path,
) -> Result<ExplainComputed> {
    let loaded = load_cohort::<T>(cohort_dir)?;
    let model = match load_model::<T>(ckpt_dir)? {
        AnyModel::Fusion(m) => m,
        AnyModel::Unimodal(_) => {
            return Err(Error::Usage(
                "explain needs a multimodal checkpoint; this fold holds a unimodal model"
                    .to_string(),
            ))
        }
    };

    let by_id: HashMap<&str, &SubjectData<T>> =
        loaded.subjects.iter().map(|s| (s.id.as_str(), s)).collect();

    let per_subject: Vec<Vec<AttributionMap<T>>> = wanted
        .par_iter()
        .map(|id| {
            let s = by_id.get(id.as_str()).ok_or_else(|| Error::BadManifest {
                path: cohort_dir.join(MANIFEST_FILE),
                detail: format!(
                    "subject {id} from the training run is not in this cohort; \
                     the run and cohort are out of sync"
                ),
            })?;
            let lhat = model.prepare_sc_lhat(&s.sc)?;
            let input = SubjectInput {
                vol: &s.vol,
                fnc: &s.fnc,
                sc_lhat: &lhat,
            };
            guided_attribution(&model, &input, id, target)
        })
        .collect::<Result<Vec<_>>>()?;

    // Transpose to per-modality lists without cloning payloads.
    let mut per_modality: Vec<Vec<AttributionMap<T>>> = vec![Vec::new(), Vec::new(), Vec::new()];
    for maps in per_subject {
        if maps.len() != 3 {
            return Err(Error::Usage(format!(
                "expected three attribution maps per subject, got {}",
                maps.len()
            )));
        }
        for (slot, map) in per_modality.iter_mut().zip(maps) {
            slot.push(map);
        }
    }

    let maps_dir = out.join(MAPS_DIR);
    std::fs::create_dir_all(&maps_dir).map_err(|e| Error::io(&maps_dir, e))?;

    let mut tables = Vec::with_capacity(3);
    let mut outputs = Vec::new();
    for maps in &per_modality {
        let avg = average_positive_map(maps)?;
        let map_rel = format!("{MAPS_DIR}/{}.mmt1", avg.modality.name());
        mmt1::write_scalars(&out.join(&map_rel), avg.payload.shape(), avg.payload.as_slice())?;
        outputs.push(map_rel);
        let table = match avg.modality {
            Modality::Volume => roi_aggregate(&avg, &loaded.atlas, &loaded.manifest.roi_names)?,
            Modality::Functional => node_table(&avg, &loaded.manifest.fnc_node_names)?,
            Modality::Structural => node_table(&avg, &loaded.manifest.sc_node_names)?,
        };
        tables.push(table);
    }
    percentages(&mut tables);
    Ok(ExplainComputed { tables, outputs })
}
