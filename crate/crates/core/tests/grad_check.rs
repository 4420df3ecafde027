//! Finite-difference verification of every differentiable primitive and of
//! the assembled fusion model, in f64.
//!
//! Each case rebuilds the computation from a flat parameter vector, so the
//! numeric gradient is a pure function evaluation; the analytic gradient
//! comes from one recorded backward pass. Inputs are placed away from ReLU
//! and max-pool decision boundaries so the central difference (eps = 1e-5)
//! stays on one linear piece.

use multifuse_core::gnn::{self, LambdaMax};
use multifuse_core::graph::ConnGraph;
use multifuse_core::model::{
    FusionModel, GraphBranchConfig, GraphKind, ModelConfig, SubjectInput, VolumeConfig,
};
use multifuse_core::tensor::{NodeId, Tape, Tensor};
use multifuse_testkit::gradcheck::{central_diff, max_rel_err};
use multifuse_testkit::graphs;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-3;

type Leaf = (Vec<usize>, Vec<f64>);

/// Compares one backward pass against central differences over the
/// concatenation of all leaf payloads. `build` must return a scalar node.
fn fd_check(label: &str, leaves: &[Leaf], build: impl Fn(&mut Tape<f64>, &[NodeId]) -> NodeId) {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = leaves
        .iter()
        .map(|(shape, data)| tape.leaf(Tensor::from_vec(shape.clone(), data.clone()), true))
        .collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = ids
        .iter()
        .flat_map(|&id| tape.grad(id).expect("leaf gradient").to_vec())
        .collect();

    let flat: Vec<f64> = leaves.iter().flat_map(|(_, d)| d.clone()).collect();
    let numeric = central_diff(
        |v: &[f64]| {
            let mut tape = Tape::new();
            let mut off = 0;
            let ids: Vec<NodeId> = leaves
                .iter()
                .map(|(shape, _)| {
                    let n: usize = shape.iter().product();
                    off += n;
                    tape.leaf(Tensor::from_vec(shape.clone(), v[off - n..off].to_vec()), false)
                })
                .collect();
            let loss = build(&mut tape, &ids);
            tape.value(loss).item()
        },
        &flat,
        EPS,
    );
    let err = max_rel_err(&analytic, &numeric, FLOOR);
    assert!(err < TOL, "{label}: max relative gradient error {err:.3e} over {} entries", flat.len());
}

/// Scalar readout: project through a fixed random dense layer, then select.
/// A random projection keeps upstream gradients non-uniform, which a plain
/// sum would not.
fn project(tape: &mut Tape<f64>, x: NodeId, seed: u64) -> NodeId {
    let n = tape.value(x).numel();
    let flat = tape.flatten(x).unwrap();
    let w = tape.leaf(
        Tensor::from_vec(vec![1, n], graphs::uniform_vec(seed, n, -1.0, 1.0)),
        false,
    );
    let b = tape.leaf(Tensor::from_vec(vec![1], vec![0.1]), false);
    let y = tape.dense(flat, w, b).unwrap();
    tape.select(y, 0).unwrap()
}

/// Uniform values kept at least `margin` away from zero, for ReLU inputs.
fn off_kink(seed: u64, len: usize, margin: f64) -> Vec<f64> {
    graphs::uniform_vec(seed, len, -1.0, 1.0)
        .into_iter()
        .map(|u| if u >= 0.0 { u + margin } else { u - margin })
        .collect()
}

/// Distinct values with pairwise gaps of at least 0.03, for max-pool inputs.
fn distinct_grid(seed: u64, len: usize) -> Vec<f64> {
    let noise = graphs::uniform_vec(seed, len, 0.0, 0.01);
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| noise[a].partial_cmp(&noise[b]).unwrap());
    let mut vals = vec![0.0; len];
    for (rank, &i) in order.iter().enumerate() {
        vals[i] = rank as f64 * 0.037 - 0.5;
    }
    vals
}

#[test]
fn dense_layer_gradients() {
    let leaves = vec![
        (vec![7], graphs::uniform_vec(1, 7, -1.0, 1.0)),
        (vec![5, 7], graphs::uniform_vec(2, 35, -1.0, 1.0)),
        (vec![5], graphs::uniform_vec(3, 5, -0.5, 0.5)),
    ];
    fd_check("dense", &leaves, |tape, ids| {
        let y = tape.dense(ids[0], ids[1], ids[2]).unwrap();
        project(tape, y, 100)
    });
}

#[test]
fn conv3d_gradients_stride_one_padded() {
    let leaves = vec![
        (vec![2, 4, 4, 4], graphs::uniform_vec(4, 128, -1.0, 1.0)),
        (vec![3, 2, 3, 3, 3], graphs::uniform_vec(5, 162, -0.6, 0.6)),
        (vec![3], graphs::uniform_vec(6, 3, -0.5, 0.5)),
    ];
    fd_check("conv3d s1 p1", &leaves, |tape, ids| {
        let y = tape.conv3d(ids[0], ids[1], ids[2], 1, 1).unwrap();
        project(tape, y, 101)
    });
}

#[test]
fn conv3d_gradients_stride_two_unpadded() {
    let leaves = vec![
        (vec![1, 5, 5, 5], graphs::uniform_vec(7, 125, -1.0, 1.0)),
        (vec![2, 1, 3, 3, 3], graphs::uniform_vec(8, 54, -0.6, 0.6)),
        (vec![2], graphs::uniform_vec(9, 2, -0.5, 0.5)),
    ];
    fd_check("conv3d s2 p0", &leaves, |tape, ids| {
        let y = tape.conv3d(ids[0], ids[1], ids[2], 2, 0).unwrap();
        project(tape, y, 102)
    });
}

#[test]
fn maxpool_gradients() {
    let leaves = vec![(vec![2, 4, 4, 4], distinct_grid(10, 128))];
    fd_check("maxpool3d", &leaves, |tape, ids| {
        let y = tape.maxpool3d(ids[0], 2, 2).unwrap();
        project(tape, y, 103)
    });
}

#[test]
fn relu_gradients() {
    let leaves = vec![(vec![40], off_kink(11, 40, 0.05))];
    fd_check("relu", &leaves, |tape, ids| {
        let y = tape.relu(ids[0]).unwrap();
        project(tape, y, 104)
    });
}

#[test]
fn softmax_gradients() {
    let leaves = vec![(vec![6], graphs::uniform_vec(12, 6, -2.0, 2.0))];
    fd_check("softmax", &leaves, |tape, ids| {
        let y = tape.softmax(ids[0]).unwrap();
        project(tape, y, 105)
    });
}

#[test]
fn softmax_cross_entropy_gradients() {
    let leaves = vec![(vec![2], graphs::uniform_vec(13, 2, -1.5, 1.5))];
    fd_check("xent binary", &leaves, |tape, ids| {
        tape.softmax_cross_entropy(ids[0], 1, 1.3).unwrap()
    });
    let leaves = vec![(vec![4], graphs::uniform_vec(14, 4, -1.5, 1.5))];
    fd_check("xent 4-way", &leaves, |tape, ids| {
        tape.softmax_cross_entropy(ids[0], 2, 0.7).unwrap()
    });
}

#[test]
fn graph_conv_gradients() {
    let adj = graphs::signed_graph(15, 5);
    let leaves = vec![
        (vec![5, 3], graphs::uniform_vec(16, 15, -1.0, 1.0)),
        (vec![3, 4], graphs::uniform_vec(17, 12, -0.8, 0.8)),
        (vec![3, 4], graphs::uniform_vec(18, 12, -0.8, 0.8)),
        (vec![4], graphs::uniform_vec(19, 4, -0.5, 0.5)),
    ];
    fd_check("graph_conv", &leaves, move |tape, ids| {
        let y = tape.graph_conv(ids[0], &adj, ids[1], ids[2], ids[3]).unwrap();
        project(tape, y, 106)
    });
}

#[test]
fn cheb_conv_gradients() {
    let sc = ConnGraph::new(6, graphs::nonneg_graph(20, 6, 0.2)).unwrap();
    let lhat = gnn::scaled_laplacian(&sc, LambdaMax::Fixed(2.0)).unwrap();
    let leaves = vec![
        (vec![6, 2], graphs::uniform_vec(21, 12, -1.0, 1.0)),
        (vec![2, 3], graphs::uniform_vec(22, 6, -0.8, 0.8)),
        (vec![2, 3], graphs::uniform_vec(23, 6, -0.8, 0.8)),
        (vec![2, 3], graphs::uniform_vec(24, 6, -0.8, 0.8)),
    ];
    fd_check("cheb_conv", &leaves, move |tape, ids| {
        let y = tape.cheb_conv(ids[0], &lhat, &[ids[1], ids[2], ids[3]]).unwrap();
        project(tape, y, 107)
    });
}

#[test]
fn reshaping_and_arithmetic_gradients() {
    let leaves = vec![
        (vec![2, 3], graphs::uniform_vec(25, 6, -1.0, 1.0)),
        (vec![6], graphs::uniform_vec(26, 6, -1.0, 1.0)),
        (vec![12], graphs::uniform_vec(27, 12, -1.0, 1.0)),
    ];
    fd_check("concat/flatten/add/scale/sum/select", &leaves, |tape, ids| {
        let a = tape.flatten(ids[0]).unwrap();
        let joined = tape.concat(&[a, ids[1]]).unwrap();
        let scaled = tape.scale(joined, 1.7).unwrap();
        let mixed = tape.add(scaled, ids[2]).unwrap();
        let total = tape.sum(mixed).unwrap();
        let one = tape.select(mixed, 3).unwrap();
        let part = tape.scale(total, 0.3).unwrap();
        tape.add(part, one).unwrap()
    });
}

fn tiny_fusion_config() -> ModelConfig {
    ModelConfig {
        volume: VolumeConfig {
            input_shape: (8, 8, 8),
            conv_channels: [2, 2, 3, 3, 4, 4],
            dense_widths: [16, 12, 8],
            latent_dim: 6,
        },
        fnc: GraphBranchConfig {
            kind: GraphKind::Functional,
            n_nodes: 5,
            hidden: [3, 4],
            cheb_k: 0,
            latent_dim: 6,
        },
        sc: GraphBranchConfig {
            kind: GraphKind::Structural,
            n_nodes: 6,
            hidden: [3, 4],
            cheb_k: 3,
            latent_dim: 6,
        },
        classifier_hidden: [8, 4],
        n_classes: 2,
        lambda_max: LambdaMax::Fixed(2.0),
    }
}

#[test]
fn end_to_end_fusion_gradients() {
    let model: FusionModel<f64> = FusionModel::init(tiny_fusion_config(), 17).unwrap();
    let vol = Tensor::from_vec(vec![8, 8, 8], graphs::uniform_vec(30, 512, 0.2, 0.8));
    let fnc_weights: Vec<f64> = graphs::signed_graph(31, 5).iter().map(|w| w * 0.8).collect();
    let fnc = ConnGraph::new(5, fnc_weights).unwrap();
    let sc = ConnGraph::new(6, graphs::nonneg_graph(32, 6, 0.15)).unwrap();
    let lhat = model.prepare_sc_lhat(&sc).unwrap();
    let input = SubjectInput { vol: &vol, fnc: &fnc, sc_lhat: &lhat };

    let mut tape = model.make_tape();
    let staged = model.stage(&mut tape, true);
    let pass = model.forward_staged(&mut tape, &staged, &input, false).unwrap();
    let loss = tape.softmax_cross_entropy(pass.logits, 1, 1.3).unwrap();
    tape.backward(loss).unwrap();
    let analytic: Vec<f64> = staged
        .ids
        .iter()
        .flat_map(|&id| tape.grad(id).expect("parameter gradient").to_vec())
        .collect();

    let flat: Vec<f64> = model.params().tensors().iter().flat_map(|t| t.as_slice().to_vec()).collect();
    let numeric = central_diff(
        |v: &[f64]| {
            let mut probe = model.clone();
            let mut off = 0;
            for t in probe.params_mut().tensors_mut() {
                let n = t.numel();
                t.as_mut_slice().copy_from_slice(&v[off..off + n]);
                off += n;
            }
            let mut tape = probe.make_tape();
            let staged = probe.stage(&mut tape, false);
            let pass = probe.forward_staged(&mut tape, &staged, &input, false).unwrap();
            let loss = tape.softmax_cross_entropy(pass.logits, 1, 1.3).unwrap();
            tape.value(loss).item()
        },
        &flat,
        EPS,
    );
    let err = max_rel_err(&analytic, &numeric, FLOOR);
    assert!(
        err < TOL,
        "fusion end-to-end: max relative gradient error {err:.3e} over {} parameters",
        flat.len()
    );
}
