//! Voronoi parcellation of an ellipsoidal foreground mask.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mmt1;
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fraction of each axis used as ellipsoid semi-axis for the foreground mask.
const MASK_SEMI_AXIS: f64 = 0.42;

/// Minimum foreground voxels required per region when generating.
const MIN_VOXELS_PER_ROI: usize = 8;

/// Integer label volume. Label 0 is background; labels `1..=n_rois` are
/// regions, each guaranteed non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtlasVolume {
    shape: [usize; 3],
    labels: Vec<i32>,
    n_rois: usize,
    voxel_counts: Vec<usize>,
}

impl AtlasVolume {
    pub fn new(shape: [usize; 3], labels: Vec<i32>, n_rois: usize) -> Result<Self> {
        let numel = shape[0] * shape[1] * shape[2];
        if labels.len() != numel {
            return Err(Error::Config(format!(
                "atlas has {} labels for shape {shape:?} ({numel} voxels)",
                labels.len()
            )));
        }
        let mut voxel_counts = vec![0usize; n_rois + 1];
        for &l in &labels {
            if l < 0 || l as usize > n_rois {
                return Err(Error::Config(format!(
                    "atlas label {l} outside 0..={n_rois}"
                )));
            }
            voxel_counts[l as usize] += 1;
        }
        for (roi, &c) in voxel_counts.iter().enumerate().skip(1) {
            if c == 0 {
                return Err(Error::Config(format!("atlas region {roi} is empty")));
            }
        }
        Ok(AtlasVolume {
            shape,
            labels,
            n_rois,
            voxel_counts,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn n_rois(&self) -> usize {
        self.n_rois
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    /// Voxel count per label, index 0 = background.
    pub fn voxel_counts(&self) -> &[usize] {
        &self.voxel_counts
    }

    pub fn foreground_voxels(&self) -> usize {
        self.labels.len() - self.voxel_counts[0]
    }

    /// Mean of `vol` over each region, background excluded. Returns one value
    /// per region, index 0 = label 1.
    pub fn roi_means<T: Scalar>(&self, vol: &Tensor<T>) -> Result<Vec<f64>> {
        if vol.numel() != self.labels.len() {
            return Err(Error::ShapeMismatch {
                op: "roi_means",
                detail: format!(
                    "volume has {} voxels, atlas has {}",
                    vol.numel(),
                    self.labels.len()
                ),
            });
        }
        let mut sums = vec![0.0f64; self.n_rois + 1];
        for (&l, &v) in self.labels.iter().zip(vol.iter()) {
            sums[l as usize] += v.as_f64();
        }
        Ok((1..=self.n_rois)
            .map(|r| sums[r] / self.voxel_counts[r] as f64)
            .collect())
    }

    /// Sum of `vol` over each region, background excluded.
    pub fn roi_sums<T: Scalar>(&self, vol: &Tensor<T>) -> Result<Vec<f64>> {
        if vol.numel() != self.labels.len() {
            return Err(Error::ShapeMismatch {
                op: "roi_sums",
                detail: format!(
                    "volume has {} voxels, atlas has {}",
                    vol.numel(),
                    self.labels.len()
                ),
            });
        }
        let mut sums = vec![0.0f64; self.n_rois + 1];
        for (&l, &v) in self.labels.iter().zip(vol.iter()) {
            sums[l as usize] += v.as_f64();
        }
        Ok(sums[1..].to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        mmt1::write_i32(path, &self.shape, &self.labels)
    }

    pub fn load(path: &Path) -> Result<AtlasVolume> {
        let m = mmt1::read(path)?;
        let shape = m.shape.clone();
        if shape.len() != 3 {
            return Err(Error::BadManifest {
                path: path.to_path_buf(),
                detail: format!("atlas must be 3-d, got shape {shape:?}"),
            });
        }
        let labels = m.to_i32(path)?;
        let n_rois = labels.iter().copied().max().unwrap_or(0).max(0) as usize;
        AtlasVolume::new([shape[0], shape[1], shape[2]], labels, n_rois)
    }
}

fn inside_mask(shape: [usize; 3], x: usize, y: usize, z: usize) -> bool {
    let c = [
        (shape[0] as f64 - 1.0) / 2.0,
        (shape[1] as f64 - 1.0) / 2.0,
        (shape[2] as f64 - 1.0) / 2.0,
    ];
    let r = [
        MASK_SEMI_AXIS * shape[0] as f64,
        MASK_SEMI_AXIS * shape[1] as f64,
        MASK_SEMI_AXIS * shape[2] as f64,
    ];
    let dx = (x as f64 - c[0]) / r[0];
    let dy = (y as f64 - c[1]) / r[1];
    let dz = (z as f64 - c[2]) / r[2];
    dx * dx + dy * dy + dz * dz <= 1.0
}

/// Voronoi atlas: `n_rois` seed sites drawn uniformly over the foreground
/// mask, each voxel taking the label of its nearest site (ties go to the
/// lower label). Every region is non-empty because each site claims at least
/// its own voxel.
pub fn generate_atlas(seed: u64, shape: [usize; 3], n_rois: usize) -> Result<AtlasVolume> {
    if n_rois == 0 {
        return Err(Error::Config("n_rois must be positive".into()));
    }
    let (d, h, w) = (shape[0], shape[1], shape[2]);
    let mut mask_voxels = 0usize;
    for x in 0..d {
        for y in 0..h {
            for z in 0..w {
                if inside_mask(shape, x, y, z) {
                    mask_voxels += 1;
                }
            }
        }
    }
    if n_rois * MIN_VOXELS_PER_ROI > mask_voxels {
        return Err(Error::Config(format!(
            "{n_rois} regions need at least {} foreground voxels, mask has {mask_voxels}",
            n_rois * MIN_VOXELS_PER_ROI
        )));
    }

    let mut rng = rng::stream(seed, "atlas-sites", 0);
    let mut sites: Vec<[usize; 3]> = Vec::with_capacity(n_rois);
    while sites.len() < n_rois {
        let cand = [
            rng.gen_range(0..d),
            rng.gen_range(0..h),
            rng.gen_range(0..w),
        ];
        if inside_mask(shape, cand[0], cand[1], cand[2]) && !sites.contains(&cand) {
            sites.push(cand);
        }
    }

    let mut labels = vec![0i32; d * h * w];
    for x in 0..d {
        for y in 0..h {
            for z in 0..w {
                if !inside_mask(shape, x, y, z) {
                    continue;
                }
                let mut best = 0usize;
                let mut best_d = u64::MAX;
                for (s, site) in sites.iter().enumerate() {
                    let dx = x as i64 - site[0] as i64;
                    let dy = y as i64 - site[1] as i64;
                    let dz = z as i64 - site[2] as i64;
                    let dist = (dx * dx + dy * dy + dz * dz) as u64;
                    if dist < best_d {
                        best_d = dist;
                        best = s;
                    }
                }
                labels[(x * h + y) * w + z] = (best + 1) as i32;
            }
        }
    }
    AtlasVolume::new(shape, labels, n_rois)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atlas_regions_all_non_empty() {
        let atlas = generate_atlas(7, [32, 32, 32], 56).unwrap();
        assert_eq!(atlas.n_rois(), 56);
        for roi in 1..=56 {
            assert!(atlas.voxel_counts()[roi] > 0, "region {roi} empty");
        }
        assert!(atlas.voxel_counts()[0] > 0, "mask covers everything");
    }

    #[test]
    fn atlas_is_deterministic() {
        let a = generate_atlas(11, [16, 16, 16], 10).unwrap();
        let b = generate_atlas(11, [16, 16, 16], 10).unwrap();
        assert_eq!(a, b);
        let c = generate_atlas(12, [16, 16, 16], 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn atlas_rejects_too_many_regions() {
        let err = generate_atlas(1, [16, 16, 16], 4000).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn atlas_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atlas.mmt1");
        let a = generate_atlas(3, [16, 16, 16], 8).unwrap();
        a.save(&path).unwrap();
        let b = AtlasVolume::load(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn roi_means_track_region_values() {
        let atlas = generate_atlas(5, [16, 16, 16], 4).unwrap();
        // Volume equal to the label everywhere: ROI mean must equal the label.
        let vol = Tensor::from_vec(
            vec![16, 16, 16],
            atlas.labels().iter().map(|&l| l as f64).collect(),
        );
        let means = atlas.roi_means(&vol).unwrap();
        for (i, &m) in means.iter().enumerate() {
            assert!((m - (i + 1) as f64).abs() < 1e-12);
        }
    }
}
