//! Run-directory plumbing: output collision handling, the per-stage run
//! manifest and config snapshot, and lookups into an existing training run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use multifuse_core::cohort;
use multifuse_core::config::RunConfig;
use multifuse_core::error::{Error, Result};
use multifuse_core::manifest::{sha256_hex, RunManifest, RUN_MANIFEST_FILE, TIMING_FILE};

use crate::artifacts::{read_stage_json, TrainSummary, CONFIG_SNAPSHOT_FILE, SUMMARY_FILE, TRAIN_DIR};

pub const TOOL: &str = "multifuse";

/// Claims `dir` for a stage that owns the whole directory. A non-empty
/// directory needs `--force`, and even then only directories carrying a
/// pipeline marker (a run or cohort manifest) are cleared; anything else is
/// left alone.
pub fn claim_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            if !force {
                return Err(Error::OutputExists(dir.to_path_buf()));
            }
            let ours = dir.join(RUN_MANIFEST_FILE).is_file()
                || dir.join(cohort::MANIFEST_FILE).is_file();
            if !ours {
                return Err(Error::Usage(format!(
                    "refusing to clear {}: it does not look like a pipeline output directory",
                    dir.display()
                )));
            }
            std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Claims named output files in a directory that may hold unrelated content
/// (a user-chosen CSV location). Creates the directory; refuses to overwrite
/// any of the named files, or the stage bookkeeping files, without `--force`.
pub fn claim_files(dir: &Path, files: &[&str], force: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !force {
        let standard = [RUN_MANIFEST_FILE, CONFIG_SNAPSHOT_FILE, TIMING_FILE];
        for name in files.iter().chain(standard.iter()) {
            let path = dir.join(name);
            if path.exists() {
                return Err(Error::Usage(format!(
                    "output file {} already exists (use --force to overwrite)",
                    path.display()
                )));
            }
        }
    }
    Ok(())
}

/// Everything needed to round off a stage: the resolved config snapshot, the
/// run manifest, and (optionally) the wall-clock sidecar. `generate` skips
/// the sidecar so a cohort directory stays a pure function of its spec.
pub struct StageSeal<'a> {
    pub dir: &'a Path,
    pub subcommand: &'a str,
    pub seed: u64,
    pub snapshot: String,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
    pub started: Instant,
    pub timing: bool,
}

pub fn seal_stage(seal: StageSeal<'_>) -> Result<()> {
    let snap_path = seal.dir.join(CONFIG_SNAPSHOT_FILE);
    std::fs::write(&snap_path, &seal.snapshot).map_err(|e| Error::io(&snap_path, e))?;
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: seal.subcommand.to_string(),
        seed: seal.seed,
        config_sha256: sha256_hex(seal.snapshot.as_bytes()),
        inputs: seal.inputs,
        outputs: seal.outputs,
    };
    manifest.save(seal.dir)?;
    let elapsed = seal.started.elapsed().as_secs_f64();
    if seal.timing {
        let t_path = seal.dir.join(TIMING_FILE);
        std::fs::write(&t_path, format!("{} = {elapsed:.3} s\n", seal.subcommand))
            .map_err(|e| Error::io(&t_path, e))?;
    }
    eprintln!(
        "[{TOOL}] {}: done in {elapsed:.1} s -> {}",
        seal.subcommand,
        seal.dir.display()
    );
    Ok(())
}

/// Aligns the model section with the cohort's dimensions; the data, not the
/// config file, is authoritative for input shapes.
pub fn sync_model_to_cohort(cfg: &mut RunConfig) {
    let [d, h, w] = cfg.cohort.volume_shape;
    cfg.model.volume.input_shape = (d, h, w);
    cfg.model.fnc.n_nodes = cfg.cohort.fnc_nodes;
    cfg.model.sc.n_nodes = cfg.cohort.sc_nodes;
}

/// A validated training run directory: manifest plus the config it ran with.
pub struct TrainRun {
    pub root: PathBuf,
    pub manifest: RunManifest,
    pub config: RunConfig,
}

pub fn load_train_run(dir: &Path) -> Result<TrainRun> {
    if !dir.join(RUN_MANIFEST_FILE).is_file() {
        return Err(Error::MissingStage {
            needed: "training run directory",
            stage: "train",
            detail: format!("{} has no {RUN_MANIFEST_FILE}", dir.display()),
        });
    }
    let manifest = RunManifest::load(dir)?;
    if manifest.subcommand != "train" {
        return Err(Error::Usage(format!(
            "{} holds a `{}` run, not a training run",
            dir.display(),
            manifest.subcommand
        )));
    }
    let snap_path = dir.join(CONFIG_SNAPSHOT_FILE);
    let text = std::fs::read_to_string(&snap_path).map_err(|e| Error::io(&snap_path, e))?;
    let config = RunConfig::from_text(&snap_path.display().to_string(), &text)?;
    if config.digest() != manifest.config_sha256 {
        return Err(Error::BadManifest {
            path: snap_path,
            detail: "config snapshot does not match the manifest's config hash".to_string(),
        });
    }
    Ok(TrainRun {
        root: dir.to_path_buf(),
        manifest,
        config,
    })
}

impl TrainRun {
    pub fn summary(&self, modality: &str) -> Result<TrainSummary> {
        let path = self.root.join(TRAIN_DIR).join(modality).join(SUMMARY_FILE);
        read_stage_json(&path, "cross-validation summary", "train")
    }

    /// Cohort directory: explicit override, else the path recorded at
    /// training time (which may be relative to the training invocation's
    /// working directory).
    pub fn cohort_dir(&self, explicit: Option<&Path>) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.to_path_buf());
        }
        let recorded = self
            .manifest
            .inputs
            .iter()
            .find(|(role, _)| role == "cohort")
            .map(|(_, p)| PathBuf::from(p));
        match recorded {
            Some(p) if p.join(cohort::MANIFEST_FILE).is_file() => Ok(p),
            Some(p) => Err(Error::MissingStage {
                needed: "cohort directory",
                stage: "generate",
                detail: format!(
                    "{} (recorded in the run manifest) is not reachable from here; pass --cohort",
                    p.display()
                ),
            }),
            None => Err(Error::BadManifest {
                path: self.root.join(RUN_MANIFEST_FILE),
                detail: "train manifest lacks a cohort input".to_string(),
            }),
        }
    }
}
