//! Synthetic cohort generation, storage layout, and loading.
//!
//! A cohort lives in one directory:
//!
//! ```text
//! <root>/cohort.json    manifest (subjects, effect spec, provenance)
//! <root>/atlas.mmt1     ROI labels, i32, one label per voxel
//! <root>/<id>/gm.mmt1   volume, f32, [d, h, w]
//! <root>/<id>/fnc.mmt1  correlation matrix, f32, [n, n], unit diagonal
//! <root>/<id>/sc.mmt1   streamline-count matrix, f32, [n, n], zero diagonal
//! ```
//!
//! All randomness is derived from the manifest seed, so regenerating with the
//! same spec reproduces every file byte for byte.

mod atlas;
mod generate;

pub use atlas::{generate_atlas, AtlasVolume};
pub use generate::generate_cohort;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ConnGraph;
use crate::mmt1;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Maximum asymmetry accepted when reading a stored connectivity matrix.
/// Residuals at or below this are symmetrized away; anything larger is an error.
pub const LOAD_SYMMETRY_TOL: f64 = 1e-6;

/// Tolerance for range checks on stored values (correlations, volumes).
pub const LOAD_RANGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "POS")]
    Pos,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Neg => 0,
            Label::Pos => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Neg => "NEG",
            Label::Pos => "POS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

/// Planted group effect. ROI and node indices are 1-based atlas labels /
/// 0-based node indices respectively; magnitudes are Cohen's d targets on the
/// derived feature (ROI mean, node strength, node betweenness).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub gm_rois: Vec<usize>,
    pub gm_delta: f64,
    pub fnc_nodes: Vec<usize>,
    pub fnc_delta: f64,
    pub sc_nodes: Vec<usize>,
    pub sc_delta: f64,
}

impl Default for EffectSpec {
    fn default() -> Self {
        EffectSpec {
            gm_rois: vec![3, 9, 14, 21, 27, 35, 42, 50],
            gm_delta: 1.5,
            fnc_nodes: vec![4, 11, 19, 30, 44],
            fnc_delta: 1.5,
            sc_nodes: vec![7, 20, 33, 52, 70],
            sc_delta: 1.5,
        }
    }
}

/// Everything the generator needs. `n_rois` counts foreground regions; label 0
/// is background and never carries signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_neg: usize,
    pub n_pos: usize,
    pub volume_shape: [usize; 3],
    pub n_rois: usize,
    pub fnc_nodes: usize,
    pub sc_nodes: usize,
    pub abeta_cutoff: f64,
    pub effect: EffectSpec,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            seed: 20260815,
            n_neg: 185,
            n_pos: 133,
            volume_shape: [32, 32, 32],
            n_rois: 56,
            fnc_nodes: 53,
            sc_nodes: 84,
            abeta_cutoff: 980.0,
            effect: EffectSpec::default(),
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_neg + self.n_pos < 10 {
            return Err(Error::Config(format!(
                "cohort needs at least 10 subjects, got {}",
                self.n_neg + self.n_pos
            )));
        }
        if self.n_neg == 0 || self.n_pos == 0 {
            return Err(Error::Config("both classes must be non-empty".into()));
        }
        for (axis, &n) in self.volume_shape.iter().enumerate() {
            if n < 16 {
                return Err(Error::Config(format!(
                    "volume axis {axis} is {n}, minimum extent is 16"
                )));
            }
        }
        if self.n_rois == 0 {
            return Err(Error::Config("n_rois must be positive".into()));
        }
        if self.fnc_nodes < 2 || self.sc_nodes < 2 {
            return Err(Error::Config("graphs need at least 2 nodes".into()));
        }
        if !(self.abeta_cutoff.is_finite() && self.abeta_cutoff > 0.0) {
            return Err(Error::Config("abeta_cutoff must be positive".into()));
        }
        let e = &self.effect;
        for &r in &e.gm_rois {
            if r == 0 || r > self.n_rois {
                return Err(Error::Config(format!(
                    "planted GM ROI {r} outside atlas labels 1..={}",
                    self.n_rois
                )));
            }
        }
        for &n in &e.fnc_nodes {
            if n >= self.fnc_nodes {
                return Err(Error::Config(format!(
                    "planted FNC node {n} outside 0..{}",
                    self.fnc_nodes
                )));
            }
        }
        for &n in &e.sc_nodes {
            if n >= self.sc_nodes {
                return Err(Error::Config(format!(
                    "planted SC node {n} outside 0..{}",
                    self.sc_nodes
                )));
            }
        }
        for (what, d) in [("gm_delta", e.gm_delta), ("fnc_delta", e.fnc_delta), ("sc_delta", e.sc_delta)] {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::Config(format!("{what} must be non-negative, got {d}")));
            }
        }
        let dup = |v: &[usize]| {
            let mut s = v.to_vec();
            s.sort_unstable();
            s.windows(2).any(|w| w[0] == w[1])
        };
        if dup(&e.gm_rois) || dup(&e.fnc_nodes) || dup(&e.sc_nodes) {
            return Err(Error::Config("planted feature lists must not repeat indices".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub label: Label,
    pub age: f64,
    pub sex: Sex,
    pub mmse: f64,
    pub abeta42: f64,
    /// Paths relative to the cohort root.
    pub gm_path: String,
    pub fnc_path: String,
    pub sc_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub schema: u32,
    pub spec: CohortSpec,
    pub atlas_path: String,
    pub roi_names: Vec<String>,
    pub fnc_node_names: Vec<String>,
    pub sc_node_names: Vec<String>,
    pub subjects: Vec<SubjectRecord>,
}

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "cohort.json";
pub const ATLAS_FILE: &str = "atlas.mmt1";

impl CohortManifest {
    pub fn to_json(&self) -> String {
        // serde_json renders struct fields in declaration order, so the bytes
        // are a pure function of the contents.
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(root: &Path) -> Result<CohortManifest> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::BadManifest {
                    path: path.clone(),
                    detail: "not found (run the generate stage first)".into(),
                }
            } else {
                Error::io(&path, e)
            }
        })?;
        let manifest: CohortManifest = serde_json::from_str(&text).map_err(|e| Error::BadManifest {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(Error::BadManifest {
                path,
                detail: format!("schema {} unsupported, expected {MANIFEST_SCHEMA}", manifest.schema),
            });
        }
        if manifest.subjects.len() != manifest.spec.n_neg + manifest.spec.n_pos {
            return Err(Error::BadManifest {
                path,
                detail: format!(
                    "subject list length {} does not match spec counts {}+{}",
                    manifest.subjects.len(),
                    manifest.spec.n_neg,
                    manifest.spec.n_pos
                ),
            });
        }
        Ok(manifest)
    }

    pub fn labels(&self) -> Vec<Label> {
        self.subjects.iter().map(|s| s.label).collect()
    }
}

/// One subject's loaded inputs. The FNC graph has its stored unit diagonal
/// zeroed; the SC graph is raw streamline counts.
#[derive(Debug, Clone)]
pub struct SubjectData<T> {
    pub id: String,
    pub label: Label,
    pub vol: Tensor<T>,
    pub fnc: ConnGraph<T>,
    pub sc: ConnGraph<T>,
}

#[derive(Debug, Clone)]
pub struct LoadedCohort<T> {
    pub root: PathBuf,
    pub manifest: CohortManifest,
    pub atlas: AtlasVolume,
    pub subjects: Vec<SubjectData<T>>,
}

fn read_matrix<T: Scalar>(
    root: &Path,
    subject: &str,
    what: &str,
    rel: &str,
    n: usize,
) -> Result<Vec<T>> {
    let path = root.join(rel);
    if !path.is_file() {
        return Err(Error::MissingFile {
            subject: subject.to_string(),
            path,
        });
    }
    let (shape, data) = mmt1::read_scalars::<T>(&path)?;
    if shape != [n, n] {
        return Err(Error::LoadShape {
            subject: subject.to_string(),
            what: what.to_string(),
            got: shape,
            expected: vec![n, n],
        });
    }
    Ok(data)
}

/// Symmetry check with the load tolerance, then exact symmetrization so the
/// stricter `ConnGraph` invariant is met by construction.
fn symmetrize<T: Scalar>(w: &mut [T], n: usize, subject: &str, what: &str) -> Result<()> {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = w[i * n + j].as_f64();
            let b = w[j * n + i].as_f64();
            let dev = (a - b).abs();
            if dev > worst {
                worst = dev;
            }
        }
    }
    if worst > LOAD_SYMMETRY_TOL {
        return Err(Error::Asymmetric {
            subject: subject.to_string(),
            what: what.to_string(),
            deviation: worst,
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let m = T::c((w[i * n + j].as_f64() + w[j * n + i].as_f64()) * 0.5);
            w[i * n + j] = m;
            w[j * n + i] = m;
        }
    }
    Ok(())
}

fn load_subject<T: Scalar>(
    root: &Path,
    manifest: &CohortManifest,
    rec: &SubjectRecord,
) -> Result<SubjectData<T>> {
    let shape = manifest.spec.volume_shape;

    let gm_path = root.join(&rec.gm_path);
    if !gm_path.is_file() {
        return Err(Error::MissingFile {
            subject: rec.id.clone(),
            path: gm_path,
        });
    }
    let (vshape, vdata) = mmt1::read_scalars::<T>(&gm_path)?;
    if vshape != shape {
        return Err(Error::LoadShape {
            subject: rec.id.clone(),
            what: "gm volume".into(),
            got: vshape,
            expected: shape.to_vec(),
        });
    }
    let vol = Tensor::from_vec(vshape, vdata);
    for &v in vol.iter() {
        let v = v.as_f64();
        if !v.is_finite() || v < -LOAD_RANGE_TOL || v > 1.0 + LOAD_RANGE_TOL {
            return Err(Error::ValueRange {
                subject: rec.id.clone(),
                what: "gm volume".into(),
                value: v,
                range: "[0, 1]".into(),
            });
        }
    }

    let nf = manifest.spec.fnc_nodes;
    let mut fnc = read_matrix::<T>(root, &rec.id, "fnc matrix", &rec.fnc_path, nf)?;
    for &v in fnc.iter() {
        let v = v.as_f64();
        if !v.is_finite() || v.abs() > 1.0 + LOAD_RANGE_TOL {
            return Err(Error::ValueRange {
                subject: rec.id.clone(),
                what: "fnc correlation".into(),
                value: v,
                range: "[-1, 1]".into(),
            });
        }
    }
    for i in 0..nf {
        let d = fnc[i * nf + i].as_f64();
        if (d - 1.0).abs() > LOAD_RANGE_TOL {
            return Err(Error::ValueRange {
                subject: rec.id.clone(),
                what: format!("fnc diagonal at node {i}"),
                value: d,
                range: "1".into(),
            });
        }
        // Stored with unit diagonal; the graph uses off-diagonal structure only.
        fnc[i * nf + i] = T::zero();
    }
    symmetrize(&mut fnc, nf, &rec.id, "fnc matrix")?;
    let fnc = ConnGraph::new(nf, fnc)?;

    let ns = manifest.spec.sc_nodes;
    let mut sc = read_matrix::<T>(root, &rec.id, "sc matrix", &rec.sc_path, ns)?;
    for &v in sc.iter() {
        let v = v.as_f64();
        if !v.is_finite() || v < -LOAD_RANGE_TOL {
            return Err(Error::ValueRange {
                subject: rec.id.clone(),
                what: "sc streamline count".into(),
                value: v,
                range: "[0, inf)".into(),
            });
        }
    }
    for i in 0..ns {
        sc[i * ns + i] = T::zero();
    }
    symmetrize(&mut sc, ns, &rec.id, "sc matrix")?;
    let sc = ConnGraph::new(ns, sc)?;

    Ok(SubjectData {
        id: rec.id.clone(),
        label: rec.label,
        vol,
        fnc,
        sc,
    })
}

/// Loads manifest, atlas, and every subject, validating shapes, ranges, and
/// symmetry along the way. Accepts either the cohort root directory or the
/// path of the manifest file itself.
pub fn load_cohort<T: Scalar>(path: &Path) -> Result<LoadedCohort<T>> {
    let root: PathBuf = if path.is_file() {
        path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf()
    } else {
        path.to_path_buf()
    };
    let root = root.as_path();
    let manifest = CohortManifest::load(root)?;
    let atlas = AtlasVolume::load(&root.join(&manifest.atlas_path))?;
    if atlas.shape() != manifest.spec.volume_shape {
        return Err(Error::BadManifest {
            path: root.join(&manifest.atlas_path),
            detail: format!(
                "atlas shape {:?} does not match cohort volume shape {:?}",
                atlas.shape(),
                manifest.spec.volume_shape
            ),
        });
    }
    if atlas.n_rois() != manifest.spec.n_rois {
        return Err(Error::BadManifest {
            path: root.join(&manifest.atlas_path),
            detail: format!(
                "atlas has {} regions, manifest expects {}",
                atlas.n_rois(),
                manifest.spec.n_rois
            ),
        });
    }
    let subjects = manifest
        .subjects
        .iter()
        .map(|rec| load_subject::<T>(root, &manifest, rec))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedCohort {
        root: root.to_path_buf(),
        manifest,
        atlas,
        subjects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation_rejects_bad_effects() {
        let mut spec = CohortSpec::default();
        spec.effect.gm_rois = vec![57];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        let mut spec = CohortSpec::default();
        spec.effect.fnc_nodes = vec![53];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        let mut spec = CohortSpec::default();
        spec.effect.sc_nodes = vec![84];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        let mut spec = CohortSpec::default();
        spec.effect.gm_delta = -0.5;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        // Null effects are a legitimate configuration.
        let mut spec = CohortSpec::default();
        spec.effect.gm_delta = 0.0;
        spec.effect.fnc_delta = 0.0;
        spec.effect.sc_delta = 0.0;
        assert!(spec.validate().is_ok());

        let mut spec = CohortSpec::default();
        spec.effect.gm_rois = vec![3, 3];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        let mut spec = CohortSpec::default();
        spec.volume_shape = [32, 12, 32];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        let mut spec = CohortSpec::default();
        spec.n_neg = 4;
        spec.n_pos = 3;
        assert!(matches!(spec.validate(), Err(Error::Config(_))));

        assert!(CohortSpec::default().validate().is_ok());
    }

    #[test]
    fn symmetrize_respects_tolerance() {
        let mut w = vec![0.0f64, 1.0, 1.0 + 0.5e-6, 0.0];
        symmetrize(&mut w, 2, "s", "m").unwrap();
        assert_eq!(w[1], w[2]);

        let mut w = vec![0.0f64, 1.0, 1.1, 0.0];
        let err = symmetrize(&mut w, 2, "s", "m").unwrap_err();
        assert!(matches!(err, Error::Asymmetric { .. }));
    }
}
