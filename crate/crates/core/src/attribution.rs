//! Guided-backpropagation attribution, subject averaging, region/node
//! aggregation, percentage contributions, and top-k ranking.

use crate::cohort::AtlasVolume;
use crate::error::{Error, Result};
use crate::model::{Modality, ModelPass, SubjectInput};
use crate::scalar::Scalar;
use crate::tensor::{ReluMode, Tensor};
use crate::train::TrainableModel;

/// Tolerance for the percentage-sum invariant.
pub const PCT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct AttributionMap<T> {
    pub modality: Modality,
    pub subject: String,
    pub target: usize,
    /// `[d, h, w]` for volumes, `[n]` for graph nodes.
    pub payload: Tensor<T>,
}

/// Gradient of the target class's pre-softmax logit with respect to each
/// model input, under the guided ReLU backward rule. Parameters are staged
/// frozen; the model is left untouched.
///
/// Volume attribution is per voxel. Graph attribution is the gradient with
/// respect to each node's constant-one input feature, one scalar per node.
pub fn guided_attribution<T: Scalar, M: TrainableModel<T>>(
    model: &M,
    input: &SubjectInput<'_, T>,
    subject: &str,
    target: usize,
) -> Result<Vec<AttributionMap<T>>> {
    let n_classes = model.config().n_classes;
    if target >= n_classes {
        return Err(Error::Usage(format!(
            "attribution target {target} out of 0..{n_classes}"
        )));
    }

    let mut tape = model.make_tape();
    tape.set_relu_mode(ReluMode::Guided)?;
    let staged = model.stage(&mut tape, false);
    let pass: ModelPass = model.forward_staged(&mut tape, &staged, input, true)?;
    let score = tape.select(pass.logits, target)?;
    tape.backward(score)?;

    let mut maps = Vec::new();
    let mut push = |modality: Modality, id: Option<crate::tensor::NodeId>| -> Result<()> {
        let Some(id) = id else { return Ok(()) };
        let grad = tape.grad(id).ok_or(Error::NonFinite {
            op: "attribution gradient missing",
        })?;
        if grad.iter().any(|g| !g.as_f64().is_finite()) {
            return Err(Error::NonFinite {
                op: "guided attribution",
            });
        }
        let payload = match modality {
            Modality::Volume => {
                let (d, h, w) = model.config().volume.input_shape;
                Tensor::from_vec(vec![d, h, w], grad.to_vec())
            }
            // Graph features are [n, 1]; the map is the per-node column.
            Modality::Functional | Modality::Structural => {
                Tensor::from_vec(vec![grad.len()], grad.to_vec())
            }
        };
        maps.push(AttributionMap {
            modality,
            subject: subject.to_string(),
            target,
            payload,
        });
        Ok(())
    };
    push(Modality::Volume, pass.vol_input)?;
    push(Modality::Functional, pass.fnc_features)?;
    push(Modality::Structural, pass.sc_features)?;
    Ok(maps)
}

/// Elementwise mean over subject maps; callers pass only the correctly
/// classified positive subjects.
pub fn average_positive_map<T: Scalar>(maps: &[AttributionMap<T>]) -> Result<AttributionMap<T>> {
    let Some(first) = maps.first() else {
        return Err(Error::EmptySample(
            "no correctly classified positive subjects to average",
        ));
    };
    for m in maps {
        if m.modality != first.modality || m.payload.shape() != first.payload.shape() {
            return Err(Error::ShapeMismatch {
                op: "average_positive_map",
                detail: format!(
                    "mixed maps: {} {:?} vs {} {:?}",
                    first.modality.name(),
                    first.payload.shape(),
                    m.modality.name(),
                    m.payload.shape()
                ),
            });
        }
    }
    let scale = T::c(1.0 / maps.len() as f64);
    let mut acc = vec![T::zero(); first.payload.numel()];
    for m in maps {
        for (a, &v) in acc.iter_mut().zip(m.payload.iter()) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a *= scale;
    }
    Ok(AttributionMap {
        modality: first.modality,
        subject: "average".to_string(),
        target: first.target,
        payload: Tensor::from_vec(first.payload.shape().to_vec(), acc),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    /// Position within the modality's table; the tie-break key.
    pub index: usize,
    pub name: String,
    /// Signed sum of attributions (volume) or signed node attribution.
    pub raw: f64,
    /// Volume: raw / voxel count; graphs: equal to raw.
    pub weighted: f64,
    /// Voxels in the region; 1 for graph nodes.
    pub voxels: usize,
    pub pct_within: f64,
    pub pct_across: f64,
}

impl RegionRow {
    /// Percentage mass: rectified weighted score. Raw signed values stay
    /// available in the row.
    pub fn mass(&self) -> f64 {
        self.weighted.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionScoreTable {
    pub modality: Modality,
    pub rows: Vec<RegionRow>,
    /// True when every rectified score is zero; percentages are then 0 by
    /// definition rather than NaN.
    pub all_zero: bool,
}

/// Sums a volume attribution map over atlas regions. Background (label 0) is
/// excluded; `Σ raw + background mass = total map sum` holds to rounding.
pub fn roi_aggregate<T: Scalar>(
    map: &AttributionMap<T>,
    atlas: &AtlasVolume,
    names: &[String],
) -> Result<RegionScoreTable> {
    if map.modality != Modality::Volume {
        return Err(Error::Usage(format!(
            "roi_aggregate expects a volume map, got {}",
            map.modality.name()
        )));
    }
    let ashape = atlas.shape();
    if map.payload.shape() != ashape {
        return Err(Error::ShapeMismatch {
            op: "roi_aggregate",
            detail: format!(
                "map shape {:?} vs atlas shape {:?}",
                map.payload.shape(),
                ashape
            ),
        });
    }
    if names.len() != atlas.n_rois() {
        return Err(Error::Config(format!(
            "{} region names for {} regions",
            names.len(),
            atlas.n_rois()
        )));
    }
    let mut sums = vec![0.0f64; atlas.n_rois() + 1];
    for (&l, &v) in atlas.labels().iter().zip(map.payload.iter()) {
        sums[l as usize] += v.as_f64();
    }
    let rows = (1..=atlas.n_rois())
        .map(|r| {
            let voxels = atlas.voxel_counts()[r];
            let raw = sums[r];
            RegionRow {
                index: r - 1,
                name: names[r - 1].clone(),
                raw,
                weighted: raw / voxels as f64,
                voxels,
                pct_within: 0.0,
                pct_across: 0.0,
            }
        })
        .collect();
    Ok(RegionScoreTable {
        modality: Modality::Volume,
        rows,
        all_zero: false,
    })
}

/// Wraps a graph attribution map as one row per node; the node's attribution
/// is used directly, with no volume weighting.
pub fn node_table<T: Scalar>(
    map: &AttributionMap<T>,
    names: &[String],
) -> Result<RegionScoreTable> {
    if map.modality == Modality::Volume {
        return Err(Error::Usage("node_table expects a graph map".into()));
    }
    if names.len() != map.payload.numel() {
        return Err(Error::Config(format!(
            "{} node names for {} nodes",
            names.len(),
            map.payload.numel()
        )));
    }
    let rows = map
        .payload
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let raw = v.as_f64();
            RegionRow {
                index: i,
                name: names[i].clone(),
                raw,
                weighted: raw,
                voxels: 1,
                pct_within: 0.0,
                pct_across: 0.0,
            }
        })
        .collect();
    Ok(RegionScoreTable {
        modality: map.modality,
        rows,
        all_zero: false,
    })
}

/// Fills `pct_within` and `pct_across` on every table. Mass is the rectified
/// weighted score; a modality with zero total mass gets zero percentages and
/// its `all_zero` flag set.
pub fn percentages(tables: &mut [RegionScoreTable]) {
    let grand: f64 = tables
        .iter()
        .flat_map(|t| t.rows.iter().map(|r| r.mass()))
        .sum();
    for table in tables.iter_mut() {
        let total: f64 = table.rows.iter().map(|r| r.mass()).sum();
        table.all_zero = total == 0.0;
        for row in table.rows.iter_mut() {
            row.pct_within = if total == 0.0 {
                0.0
            } else {
                100.0 * row.mass() / total
            };
            row.pct_across = if grand == 0.0 {
                0.0
            } else {
                100.0 * row.mass() / grand
            };
        }
    }
}

/// Row indices of the top-k regions: descending within-modality percentage,
/// ties broken by region index ascending. `k` is clamped to the table size.
pub fn top_k(table: &RegionScoreTable, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..table.rows.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = &table.rows[a];
        let rb = &table.rows[b];
        rb.pct_within
            .partial_cmp(&ra.pct_within)
            .unwrap()
            .then(ra.index.cmp(&rb.index))
    });
    order.truncate(k.min(table.rows.len()));
    order
}

/// All rows of all tables ranked by across-modality percentage (descending),
/// ties by modality order then region index. Returns `(table_idx, row_idx)`.
pub fn combined_ranking(tables: &[RegionScoreTable]) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize)> = tables
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.rows.len()).map(move |ri| (ti, ri)))
        .collect();
    order.sort_by(|&(ta, ra), &(tb, rb)| {
        let a = &tables[ta].rows[ra];
        let b = &tables[tb].rows[rb];
        b.pct_across
            .partial_cmp(&a.pct_across)
            .unwrap()
            .then(ta.cmp(&tb))
            .then(a.index.cmp(&b.index))
    });
    order
}
