//! Cohort synthesis: smooth GM fields, low-rank FNC, distance-decay SC.
//!
//! Group effects are planted on derived features (ROI mean intensity, node
//! strength, node betweenness) with magnitudes given in Cohen's d units. GM
//! effects map to an exact intensity shift; FNC and SC effects act through
//! loading pulls and corridor boosts whose per-d scale factors were fixed
//! once against measured effect sizes on the default configuration.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::atlas::{generate_atlas, AtlasVolume};
use super::{CohortManifest, CohortSpec, Label, Sex, SubjectRecord, ATLAS_FILE, MANIFEST_SCHEMA};
use crate::error::{Error, Result};
use crate::mmt1;
use crate::rng;
use crate::tensor::Tensor;

// GM intensity model: base + cohort anatomy + subject offset + per-ROI offset
// + smooth voxel noise, clamped to [0, 1]. Background voxels stay 0.
const GM_BASE: f64 = 0.55;
const GM_ANATOMY_SD: f64 = 0.06;
const GM_SUBJECT_SD: f64 = 0.05;
const GM_ROI_SD: f64 = 0.05;
const GM_VOXEL_SD: f64 = 0.03;
/// Smooth fields are trilinear upsamples of an iid normal grid this large.
const LOWRES: usize = 8;

// FNC latent factor model: unit loading vectors, correlations are dot
// products, so |r| <= 1 holds without clipping.
const FNC_RANK: usize = 8;
const FNC_JITTER: f64 = 0.25;
const FNC_COMMON: f64 = 0.12;
/// Loading pull toward the common axis per unit Cohen's d of planted effect.
const FNC_PULL_PER_D: f64 = 0.12;

// SC edge model: log-normal jitter on a distance-decay backbone, rounded to
// whole streamline counts.
const SC_SCALE: f64 = 2000.0;
const SC_DECAY: f64 = 0.35;
const SC_JITTER_SD: f64 = 0.35;
/// Multiplicative boost of a planted node's incident edges per unit Cohen's d;
/// shortens every shortest-path corridor through that node.
const SC_BOOST_PER_D: f64 = 0.30;

// Demographics, class-conditional.
const NEG_AGE: (f64, f64) = (71.8, 7.1);
const POS_AGE: (f64, f64) = (74.5, 7.5);
const NEG_MMSE: (f64, f64) = (28.9, 1.5);
const POS_MMSE: (f64, f64) = (25.3, 4.3);
const NEG_ABETA: (f64, f64) = (1684.3, 601.2);
const POS_ABETA: (f64, f64) = (607.5, 189.3);
const NEG_P_MALE: f64 = 68.0 / 185.0;
const POS_P_MALE: f64 = 71.0 / 133.0;

/// Trilinear interpolation over a low-resolution iid normal grid. Values at
/// grid points are N(0,1); interpolation keeps the field smooth at voxel
/// scale.
struct SmoothField {
    grid: Vec<f64>,
}

impl SmoothField {
    fn draw(rng: &mut ChaCha8Rng) -> SmoothField {
        let grid = (0..LOWRES * LOWRES * LOWRES)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        SmoothField { grid }
    }

    fn at(&self, shape: [usize; 3], x: usize, y: usize, z: usize) -> f64 {
        let l = LOWRES;
        let coord = |v: usize, n: usize| -> (usize, usize, f64) {
            let u = v as f64 * (l - 1) as f64 / (n - 1) as f64;
            let i0 = (u.floor() as usize).min(l - 1);
            let i1 = (i0 + 1).min(l - 1);
            (i0, i1, u - i0 as f64)
        };
        let (x0, x1, fx) = coord(x, shape[0]);
        let (y0, y1, fy) = coord(y, shape[1]);
        let (z0, z1, fz) = coord(z, shape[2]);
        let g = |i: usize, j: usize, k: usize| self.grid[(i * l + j) * l + k];
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(g(x0, y0, z0), g(x1, y0, z0), fx);
        let c01 = lerp(g(x0, y0, z1), g(x1, y0, z1), fx);
        let c10 = lerp(g(x0, y1, z0), g(x1, y1, z0), fx);
        let c11 = lerp(g(x0, y1, z1), g(x1, y1, z1), fx);
        let c0 = lerp(c00, c10, fy);
        let c1 = lerp(c01, c11, fy);
        lerp(c0, c1, fz)
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    normalize(&mut v);
    v
}

#[derive(Debug, Clone)]
pub struct SubjectMeta {
    pub id: String,
    pub label: Label,
    pub age: f64,
    pub sex: Sex,
    pub mmse: f64,
    pub abeta42: f64,
}

/// All cohort-level state. Subject payloads are a pure function of
/// `(model, subject index)`, so generation parallelizes over subjects.
pub struct CohortModel {
    spec: CohortSpec,
    atlas: AtlasVolume,
    anatomy: SmoothField,
    /// Base loadings, `fnc_nodes x FNC_RANK`, unit rows.
    fnc_u0: Vec<f64>,
    /// Common axis the planted pull acts along, unit length.
    fnc_axis: Vec<f64>,
    /// Backbone edge weights before jitter, `sc_nodes x sc_nodes`.
    sc_base: Vec<f64>,
    planted_gm: Vec<bool>,
    planted_fnc: Vec<bool>,
    planted_sc: Vec<bool>,
}

impl CohortModel {
    pub fn new(spec: CohortSpec) -> Result<CohortModel> {
        spec.validate()?;
        let atlas = generate_atlas(
            rng::derive_seed(spec.seed, "atlas", 0),
            spec.volume_shape,
            spec.n_rois,
        )?;

        let anatomy = SmoothField::draw(&mut rng::stream(spec.seed, "gm-anatomy", 0));

        let mut fnc_rng = rng::stream(spec.seed, "fnc-base", 0);
        let mut fnc_u0 = Vec::with_capacity(spec.fnc_nodes * FNC_RANK);
        for _ in 0..spec.fnc_nodes {
            fnc_u0.extend(unit_vector(&mut fnc_rng, FNC_RANK));
        }
        let fnc_axis = unit_vector(&mut rng::stream(spec.seed, "fnc-axis", 0), FNC_RANK);

        let mut pt_rng = rng::stream(spec.seed, "sc-points", 0);
        let points: Vec<[f64; 3]> = (0..spec.sc_nodes)
            .map(|_| [pt_rng.gen::<f64>(), pt_rng.gen::<f64>(), pt_rng.gen::<f64>()])
            .collect();
        let n = spec.sc_nodes;
        let mut sc_base = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (0..3)
                    .map(|a| (points[i][a] - points[j][a]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let w = SC_SCALE * (-d / SC_DECAY).exp();
                sc_base[i * n + j] = w;
                sc_base[j * n + i] = w;
            }
        }

        let mut planted_gm = vec![false; spec.n_rois + 1];
        for &r in &spec.effect.gm_rois {
            planted_gm[r] = true;
        }
        let mut planted_fnc = vec![false; spec.fnc_nodes];
        for &i in &spec.effect.fnc_nodes {
            planted_fnc[i] = true;
        }
        let mut planted_sc = vec![false; spec.sc_nodes];
        for &i in &spec.effect.sc_nodes {
            planted_sc[i] = true;
        }

        Ok(CohortModel {
            spec,
            atlas,
            anatomy,
            fnc_u0,
            fnc_axis,
            sc_base,
            planted_gm,
            planted_fnc,
            planted_sc,
        })
    }

    pub fn atlas(&self) -> &AtlasVolume {
        &self.atlas
    }

    pub fn n_subjects(&self) -> usize {
        self.spec.n_neg + self.spec.n_pos
    }

    fn label_of(&self, index: usize) -> Label {
        if index < self.spec.n_neg {
            Label::Neg
        } else {
            Label::Pos
        }
    }

    fn subject_seed(&self, index: usize) -> u64 {
        rng::derive_seed(self.spec.seed, "subject", index as u64)
    }

    pub fn subject_meta(&self, index: usize) -> SubjectMeta {
        let label = self.label_of(index);
        let seed = self.subject_seed(index);
        let mut rng = rng::stream(seed, "demographics", 0);

        let (age_m, age_s) = if label == Label::Neg { NEG_AGE } else { POS_AGE };
        let age = age_m + age_s * rng.sample::<f64, _>(StandardNormal);
        let age = (age.clamp(55.0, 95.0) * 10.0).round() / 10.0;

        let p_male = if label == Label::Neg { NEG_P_MALE } else { POS_P_MALE };
        let sex = if rng.gen::<f64>() < p_male { Sex::Male } else { Sex::Female };

        let (mm_m, mm_s) = if label == Label::Neg { NEG_MMSE } else { POS_MMSE };
        let mmse = (mm_m + mm_s * rng.sample::<f64, _>(StandardNormal))
            .round()
            .clamp(0.0, 30.0);

        let abeta42 = self.draw_abeta(label, &mut rng);

        SubjectMeta {
            id: format!("sub-{:04}", index + 1),
            label,
            age,
            sex,
            mmse,
            abeta42,
        }
    }

    /// Class-conditional log-normal matched to the target mean and sd,
    /// truncated at the cutoff so the label invariant holds by construction.
    fn draw_abeta(&self, label: Label, rng: &mut ChaCha8Rng) -> f64 {
        let (m, s) = if label == Label::Neg { NEG_ABETA } else { POS_ABETA };
        let sigma2 = (1.0 + (s / m).powi(2)).ln();
        let sigma = sigma2.sqrt();
        let mu = m.ln() - sigma2 / 2.0;
        let cutoff = self.spec.abeta_cutoff;
        for _ in 0..1000 {
            let v = (mu + sigma * rng.sample::<f64, _>(StandardNormal)).exp();
            let ok = match label {
                Label::Neg => v >= cutoff,
                Label::Pos => v < cutoff,
            };
            if ok {
                return (v * 10.0).round() / 10.0;
            }
        }
        // Unreachable in practice; keeps the invariant even so.
        match label {
            Label::Neg => (cutoff * 1.01 * 10.0).round() / 10.0,
            Label::Pos => (cutoff * 0.99 * 10.0).round() / 10.0,
        }
    }

    pub fn subject_volume(&self, index: usize) -> Tensor<f32> {
        let label = self.label_of(index);
        let seed = self.subject_seed(index);
        let shape = self.spec.volume_shape;

        let z_subject = rng::stream(seed, "gm-subject", 0).sample::<f64, _>(StandardNormal);
        let mut roi_rng = rng::stream(seed, "gm-roi", 0);
        let roi_offsets: Vec<f64> = (0..=self.spec.n_rois)
            .map(|_| roi_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let noise = SmoothField::draw(&mut rng::stream(seed, "gm-field", 0));

        // Shift sized so the ROI-mean feature moves by gm_delta in units of
        // its between-subject sd (subject factor plus ROI offset).
        let delta_abs = self.spec.effect.gm_delta
            * (GM_SUBJECT_SD * GM_SUBJECT_SD + GM_ROI_SD * GM_ROI_SD).sqrt();

        let (d, h, w) = (shape[0], shape[1], shape[2]);
        let labels = self.atlas.labels();
        let mut data = vec![0.0f32; d * h * w];
        for x in 0..d {
            for y in 0..h {
                for z in 0..w {
                    let idx = (x * h + y) * w + z;
                    let roi = labels[idx] as usize;
                    if roi == 0 {
                        continue;
                    }
                    let mut v = GM_BASE
                        + GM_ANATOMY_SD * self.anatomy.at(shape, x, y, z)
                        + GM_SUBJECT_SD * z_subject
                        + GM_ROI_SD * roi_offsets[roi]
                        + GM_VOXEL_SD * noise.at(shape, x, y, z);
                    if label == Label::Pos && self.planted_gm[roi] {
                        v -= delta_abs;
                    }
                    data[idx] = v.clamp(0.0, 1.0) as f32;
                }
            }
        }
        Tensor::from_vec(vec![d, h, w], data)
    }

    /// Correlation matrix with unit diagonal, entries exactly in [-1, 1].
    pub fn subject_fnc(&self, index: usize) -> Vec<f32> {
        let label = self.label_of(index);
        let seed = self.subject_seed(index);
        let n = self.spec.fnc_nodes;
        let q = FNC_RANK;

        let g_subject = rng::stream(seed, "fnc-subject", 0).sample::<f64, _>(StandardNormal);
        let mut jit_rng = rng::stream(seed, "fnc-jitter", 0);

        let pull_planted = FNC_PULL_PER_D * self.spec.effect.fnc_delta;
        let mut u = vec![0.0f64; n * q];
        for i in 0..n {
            let mut pull = FNC_COMMON * g_subject;
            if label == Label::Pos && self.planted_fnc[i] {
                pull += pull_planted;
            }
            let row = &mut u[i * q..(i + 1) * q];
            for (a, &base) in row.iter_mut().zip(&self.fnc_u0[i * q..(i + 1) * q]) {
                *a = base + FNC_JITTER * jit_rng.sample::<f64, _>(StandardNormal);
            }
            for (a, &c) in row.iter_mut().zip(&self.fnc_axis) {
                *a += pull * c;
            }
            normalize(row);
        }

        let mut r = vec![0.0f32; n * n];
        for i in 0..n {
            r[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let dot: f64 = (0..q).map(|a| u[i * q + a] * u[j * q + a]).sum();
                let dot = dot.clamp(-1.0, 1.0) as f32;
                r[i * n + j] = dot;
                r[j * n + i] = dot;
            }
        }
        r
    }

    /// Symmetric nonnegative whole-count matrix with zero diagonal.
    pub fn subject_sc(&self, index: usize) -> Vec<f32> {
        let label = self.label_of(index);
        let seed = self.subject_seed(index);
        let n = self.spec.sc_nodes;

        let mut jit_rng = rng::stream(seed, "sc-jitter", 0);
        let boost = 1.0 + SC_BOOST_PER_D * self.spec.effect.sc_delta;

        let mut w = vec![0.0f32; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let z = jit_rng.sample::<f64, _>(StandardNormal);
                // exp(-sd^2/2) keeps the jitter mean-one.
                let mut v = self.sc_base[i * n + j]
                    * (SC_JITTER_SD * z - SC_JITTER_SD * SC_JITTER_SD / 2.0).exp();
                if label == Label::Pos && (self.planted_sc[i] || self.planted_sc[j]) {
                    v *= boost;
                }
                let v = v.round().max(0.0) as f32;
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        w
    }

    pub fn roi_names(&self) -> Vec<String> {
        (1..=self.spec.n_rois).map(|r| format!("roi_{r:02}")).collect()
    }

    pub fn fnc_node_names(&self) -> Vec<String> {
        (1..=self.spec.fnc_nodes).map(|i| format!("ic_{i:02}")).collect()
    }

    pub fn sc_node_names(&self) -> Vec<String> {
        (1..=self.spec.sc_nodes).map(|i| format!("node_{i:02}")).collect()
    }

    pub fn manifest(&self) -> CohortManifest {
        let subjects = (0..self.n_subjects())
            .map(|i| {
                let meta = self.subject_meta(i);
                SubjectRecord {
                    gm_path: format!("{}/gm.mmt1", meta.id),
                    fnc_path: format!("{}/fnc.mmt1", meta.id),
                    sc_path: format!("{}/sc.mmt1", meta.id),
                    id: meta.id,
                    label: meta.label,
                    age: meta.age,
                    sex: meta.sex,
                    mmse: meta.mmse,
                    abeta42: meta.abeta42,
                }
            })
            .collect();
        CohortManifest {
            schema: MANIFEST_SCHEMA,
            spec: self.spec.clone(),
            atlas_path: ATLAS_FILE.to_string(),
            roi_names: self.roi_names(),
            fnc_node_names: self.fnc_node_names(),
            sc_node_names: self.sc_node_names(),
            subjects,
        }
    }
}

/// Generates the full cohort under `out_dir` and returns the manifest.
/// `out_dir` is created if missing; existing-output policy is the caller's.
pub fn generate_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<CohortManifest> {
    let model = CohortModel::new(spec.clone())?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    model.atlas().save(&out_dir.join(ATLAS_FILE))?;

    let manifest = model.manifest();
    manifest
        .subjects
        .par_iter()
        .enumerate()
        .try_for_each(|(i, rec)| -> Result<()> {
            let dir = out_dir.join(&rec.id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

            let vol = model.subject_volume(i);
            mmt1::write_scalars(&out_dir.join(&rec.gm_path), vol.shape(), vol.as_slice())?;

            let n = spec.fnc_nodes;
            let fnc = model.subject_fnc(i);
            mmt1::write_scalars(&out_dir.join(&rec.fnc_path), &[n, n], &fnc)?;

            let n = spec.sc_nodes;
            let sc = model.subject_sc(i);
            mmt1::write_scalars(&out_dir.join(&rec.sc_path), &[n, n], &sc)?;
            Ok(())
        })?;

    manifest.save(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::load_cohort;

    fn tiny_spec(seed: u64) -> CohortSpec {
        CohortSpec {
            seed,
            n_neg: 8,
            n_pos: 6,
            volume_shape: [16, 16, 16],
            n_rois: 12,
            fnc_nodes: 10,
            sc_nodes: 12,
            abeta_cutoff: 980.0,
            effect: super::super::EffectSpec {
                gm_rois: vec![2, 5],
                gm_delta: 1.5,
                fnc_nodes: vec![1, 4],
                fnc_delta: 1.5,
                sc_nodes: vec![0, 7],
                sc_delta: 1.5,
            },
        }
    }

    #[test]
    fn label_tracks_abeta_cutoff() {
        let model = CohortModel::new(tiny_spec(5)).unwrap();
        for i in 0..model.n_subjects() {
            let m = model.subject_meta(i);
            assert_eq!(m.label == Label::Pos, m.abeta42 < 980.0, "subject {i}");
        }
    }

    #[test]
    fn volumes_stay_in_unit_range_and_background_zero() {
        let model = CohortModel::new(tiny_spec(6)).unwrap();
        let vol = model.subject_volume(0);
        for (&l, &v) in model.atlas().labels().iter().zip(vol.iter()) {
            assert!((0.0..=1.0).contains(&v), "voxel {v} out of range");
            if l == 0 {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn fnc_is_correlation_like() {
        let model = CohortModel::new(tiny_spec(7)).unwrap();
        let n = model.spec.fnc_nodes;
        let r = model.subject_fnc(3);
        for i in 0..n {
            assert_eq!(r[i * n + i], 1.0);
            for j in 0..n {
                assert!((r[i * n + j]).abs() <= 1.0);
                assert_eq!(r[i * n + j], r[j * n + i]);
            }
        }
    }

    #[test]
    fn sc_is_nonnegative_whole_counts() {
        let model = CohortModel::new(tiny_spec(8)).unwrap();
        let n = model.spec.sc_nodes;
        let w = model.subject_sc(2);
        for i in 0..n {
            assert_eq!(w[i * n + i], 0.0);
            for j in 0..n {
                let v = w[i * n + j];
                assert!(v >= 0.0);
                assert_eq!(v, v.round());
                assert_eq!(v, w[j * n + i]);
            }
        }
    }

    #[test]
    fn generation_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(9);
        let manifest = generate_cohort(&spec, dir.path()).unwrap();
        assert_eq!(manifest.subjects.len(), 14);

        let loaded = load_cohort::<f32>(dir.path()).unwrap();
        assert_eq!(loaded.manifest, manifest);

        let model = CohortModel::new(spec).unwrap();
        let vol = model.subject_volume(0);
        assert_eq!(loaded.subjects[0].vol.as_slice(), vol.as_slice());

        // FNC loads with the stored unit diagonal zeroed.
        let n = model.spec.fnc_nodes;
        let fnc = model.subject_fnc(0);
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 0.0 } else { fnc[i * n + j] };
                assert_eq!(loaded.subjects[0].fnc.weights()[i * n + j], expect);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_across_runs() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_cohort(&tiny_spec(10), d1.path()).unwrap();
        generate_cohort(&tiny_spec(10), d2.path()).unwrap();
        let m1 = std::fs::read(d1.path().join(super::super::MANIFEST_FILE)).unwrap();
        let m2 = std::fs::read(d2.path().join(super::super::MANIFEST_FILE)).unwrap();
        assert_eq!(m1, m2);
        for f in ["sub-0001/gm.mmt1", "sub-0003/fnc.mmt1", "sub-0014/sc.mmt1", "atlas.mmt1"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs between runs");
        }
    }

    #[test]
    fn load_rejects_corrupted_fnc_value() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(11);
        generate_cohort(&spec, dir.path()).unwrap();

        let path = dir.path().join("sub-0002/fnc.mmt1");
        let (shape, mut data) = mmt1::read_scalars::<f32>(&path).unwrap();
        data[1] = 1.5;
        data[spec.fnc_nodes] = 1.5;
        mmt1::write_scalars(&path, &shape, &data).unwrap();

        let err = load_cohort::<f32>(dir.path()).unwrap_err();
        match err {
            Error::ValueRange { subject, .. } => assert_eq!(subject, "sub-0002"),
            other => panic!("expected ValueRange, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_missing_file_naming_subject() {
        let dir = tempfile::tempdir().unwrap();
        generate_cohort(&tiny_spec(12), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("sub-0005/sc.mmt1")).unwrap();
        let err = load_cohort::<f32>(dir.path()).unwrap_err();
        match err {
            Error::MissingFile { subject, .. } => assert_eq!(subject, "sub-0005"),
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_asymmetric_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec(13);
        generate_cohort(&spec, dir.path()).unwrap();

        let path = dir.path().join("sub-0001/sc.mmt1");
        let (shape, mut data) = mmt1::read_scalars::<f32>(&path).unwrap();
        data[1] += 2.0;
        mmt1::write_scalars(&path, &shape, &data).unwrap();

        let err = load_cohort::<f32>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Asymmetric { .. }), "got {err:?}");
    }

    #[test]
    fn load_rejects_wrong_shape() {
        let dir = tempfile::tempdir().unwrap();
        generate_cohort(&tiny_spec(14), dir.path()).unwrap();
        let path = dir.path().join("sub-0001/gm.mmt1");
        mmt1::write_scalars::<f32>(&path, &[4, 4, 4], &vec![0.5; 64]).unwrap();
        let err = load_cohort::<f32>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::LoadShape { .. }), "got {err:?}");
    }

    #[test]
    fn planted_gm_shift_has_expected_sign_and_size() {
        let model = CohortModel::new(tiny_spec(15)).unwrap();
        let spec = model.spec.clone();
        let mut neg_means = Vec::new();
        let mut pos_means = Vec::new();
        for i in 0..model.n_subjects() {
            let vol = model.subject_volume(i);
            let means = model.atlas().roi_means(&vol).unwrap();
            let planted_mean =
                spec.effect.gm_rois.iter().map(|&r| means[r - 1]).sum::<f64>() / 2.0;
            if model.subject_meta(i).label == Label::Neg {
                neg_means.push(planted_mean);
            } else {
                pos_means.push(planted_mean);
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        // 14 subjects is noisy; direction plus rough magnitude only.
        let gap = avg(&neg_means) - avg(&pos_means);
        assert!(gap > 0.02, "planted GM gap {gap} too small");
    }
}
