//! Wengert-list tape: records primitive ops in execution order and replays
//! them backwards to accumulate gradients.

use super::ops::{self, ConvDims, PoolDims};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = usize;

/// Backward rule applied at ReLU nodes.
///
/// `Standard` passes gradient where the forward input was positive.
/// `Guided` additionally requires the incoming gradient to be positive.
/// `GuidedGradientOnly` masks on gradient sign alone; kept as a switch so
/// the two readings of the guided rule can be compared on the same tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReluMode {
    #[default]
    Standard,
    Guided,
    GuidedGradientOnly,
}

enum Op<T: Scalar> {
    Leaf,
    Dense { x: NodeId, w: NodeId, b: NodeId, n_in: usize, n_out: usize },
    Conv3d { x: NodeId, k: NodeId, b: NodeId, dims: ConvDims },
    MaxPool3d { x: NodeId, argmax: Vec<u32> },
    Relu { x: NodeId },
    Softmax { x: NodeId },
    SoftmaxXent { logits: NodeId, target: usize, weight: T, probs: Vec<T> },
    Concat { parts: Vec<NodeId> },
    Reshape { x: NodeId },
    Select { x: NodeId, index: usize },
    Sum { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: T },
    GraphConv { x: NodeId, w1: NodeId, w2: NodeId, b: NodeId, adj: Vec<T>, ax: Vec<T>, n: usize, f_in: usize, f_out: usize },
    ChebConv { x: NodeId, thetas: Vec<NodeId>, lhat: Vec<T>, basis: Vec<Vec<T>>, n: usize, f_in: usize, f_out: usize },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only computation graph. Node indices double as the topological
/// order, so the backward sweep is a single reverse scan.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    relu_mode: ReluMode,
    in_backward: bool,
    relu_probe_min: Option<f64>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), relu_mode: ReluMode::Standard, in_backward: false, relu_probe_min: None }
    }

    pub fn with_relu_mode(mode: ReluMode) -> Self {
        let mut t = Self::new();
        t.relu_mode = mode;
        t
    }

    pub fn relu_mode(&self) -> ReluMode {
        self.relu_mode
    }

    /// Switch the ReLU backward rule. Refused while a backward pass is in
    /// flight: gradients already written under the old rule could not be
    /// distinguished from ones written under the new rule.
    pub fn set_relu_mode(&mut self, mode: ReluMode) -> Result<()> {
        if self.in_backward {
            return Err(Error::Usage("cannot change relu mode during a backward pass".into()));
        }
        self.relu_mode = mode;
        Ok(())
    }

    /// Start recording the minimum gradient value observed immediately after
    /// each ReLU backward step. Used to audit the guided rule.
    pub fn enable_relu_probe(&mut self) {
        self.relu_probe_min = Some(f64::INFINITY);
    }

    /// Minimum post-ReLU backward gradient since the probe was enabled, or
    /// None if the probe is off or no ReLU ran.
    pub fn relu_probe_min(&self) -> Option<f64> {
        match self.relu_probe_min {
            Some(v) if v.is_finite() => Some(v),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads[id].as_deref()
    }

    /// Clear all accumulated gradients, keeping values and structure.
    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        self.nodes.len() - 1
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Layer-boundary finiteness guard; active only with debug assertions.
    fn guard(&self, op: &'static str, data: &[T]) -> Result<()> {
        if cfg!(debug_assertions) && !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        Ok(())
    }

    // -- op builders --------------------------------------------------------

    /// Fully connected layer: w is (n_out, n_in), x and b are vectors.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        let wv = &self.nodes[w].value;
        let bv = &self.nodes[b].value;
        let (n_out, n_in) = match *wv.shape() {
            [o, i] => (o, i),
            _ => return Err(Error::ShapeMismatch { op: "dense", detail: format!("weight must be 2-D, got {:?}", wv.shape()) }),
        };
        if xv.numel() != n_in || bv.numel() != n_out {
            return Err(Error::ShapeMismatch {
                op: "dense",
                detail: format!("weight ({n_out}, {n_in}) with input {} and bias {}", xv.numel(), bv.numel()),
            });
        }
        let y = ops::dense_forward(xv.as_slice(), wv.as_slice(), bv.as_slice(), n_in, n_out);
        self.guard("dense", &y)?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(Tensor::from_vec(vec![n_out], y), Op::Dense { x, w, b, n_in, n_out }, rg))
    }

    /// 3-D convolution over (cin, d, h, w) input with (cout, cin, k, k, k)
    /// kernel, zero padding, cubic stride.
    pub fn conv3d(&mut self, x: NodeId, k: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        let kv = &self.nodes[k].value;
        let bv = &self.nodes[b].value;
        let (cin, d, h, w) = match *xv.shape() {
            [c, d, h, w] => (c, d, h, w),
            _ => return Err(Error::ShapeMismatch { op: "conv3d", detail: format!("input must be 4-D, got {:?}", xv.shape()) }),
        };
        let (cout, kc, k0, k1, k2) = match *kv.shape() {
            [a, b, c, d, e] => (a, b, c, d, e),
            _ => return Err(Error::ShapeMismatch { op: "conv3d", detail: format!("kernel must be 5-D, got {:?}", kv.shape()) }),
        };
        if kc != cin || k0 != k1 || k1 != k2 {
            return Err(Error::ShapeMismatch {
                op: "conv3d",
                detail: format!("kernel {:?} does not match input channels {cin} or is not cubic", kv.shape()),
            });
        }
        if bv.numel() != cout {
            return Err(Error::ShapeMismatch { op: "conv3d", detail: format!("bias {} != cout {cout}", bv.numel()) });
        }
        let dims = ConvDims::new(cin, cout, k0, (d, h, w), stride, pad)?;
        let y = ops::conv3d_forward(xv.as_slice(), kv.as_slice(), bv.as_slice(), &dims);
        self.guard("conv3d", &y)?;
        let rg = self.any_grad(&[x, k, b]);
        let shape = vec![dims.cout, dims.od, dims.oh, dims.ow];
        Ok(self.push(Tensor::from_vec(shape, y), Op::Conv3d { x, k, b, dims }, rg))
    }

    pub fn maxpool3d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        let (c, d, h, w) = match *xv.shape() {
            [c, d, h, w] => (c, d, h, w),
            _ => return Err(Error::ShapeMismatch { op: "maxpool3d", detail: format!("input must be 4-D, got {:?}", xv.shape()) }),
        };
        let dims = PoolDims::new(c, (d, h, w), window, stride)?;
        let (y, argmax) = ops::maxpool3d_forward(xv.as_slice(), &dims);
        let rg = self.nodes[x].requires_grad;
        let shape = vec![dims.c, dims.od, dims.oh, dims.ow];
        Ok(self.push(Tensor::from_vec(shape, y), Op::MaxPool3d { x, argmax }, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = ops::relu_forward(self.nodes[x].value.as_slice());
        let shape = self.nodes[x].value.shape().to_vec();
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(Tensor::from_vec(shape, y), Op::Relu { x }, rg))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let y = ops::softmax_forward(self.nodes[x].value.as_slice());
        self.guard("softmax", &y)?;
        let shape = self.nodes[x].value.shape().to_vec();
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(Tensor::from_vec(shape, y), Op::Softmax { x }, rg))
    }

    /// Class-weighted cross entropy fused with softmax; yields a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize, weight: T) -> Result<NodeId> {
        let lv = &self.nodes[logits].value;
        if target >= lv.numel() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                detail: format!("target {target} out of range for {} logits", lv.numel()),
            });
        }
        let (loss, probs) = ops::softmax_xent_forward(lv.as_slice(), target, weight);
        self.guard("softmax_cross_entropy", &[loss])?;
        let rg = self.nodes[logits].requires_grad;
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxXent { logits, target, weight, probs }, rg))
    }

    /// Concatenate flat vectors in the given order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch { op: "concat", detail: "no inputs".into() });
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.nodes[p].value.as_slice());
        }
        let rg = self.any_grad(parts);
        let n = data.len();
        Ok(self.push(Tensor::from_vec(vec![n], data), Op::Concat { parts: parts.to_vec() }, rg))
    }

    /// View as a flat vector.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.nodes[x].value.clone();
        let n = v.numel();
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(v.reshaped(vec![n]), Op::Reshape { x }, rg))
    }

    /// Extract one element as a scalar node.
    pub fn select(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        if index >= xv.numel() {
            return Err(Error::ShapeMismatch { op: "select", detail: format!("index {index} out of range {}", xv.numel()) });
        }
        let v = xv.as_slice()[index];
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(Tensor::scalar(v), Op::Select { x, index }, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let mut acc = T::zero();
        for &v in self.nodes[x].value.as_slice() {
            acc += v;
        }
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(Tensor::scalar(acc), Op::Sum { x }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch { op: "add", detail: format!("{:?} vs {:?}", av.shape(), bv.shape()) });
        }
        let data: Vec<T> = av.as_slice().iter().zip(bv.as_slice()).map(|(&x, &y)| x + y).collect();
        let shape = av.shape().to_vec();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::from_vec(shape, data), Op::Add { a, b }, rg))
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        let data: Vec<T> = xv.as_slice().iter().map(|&v| v * c).collect();
        let shape = xv.shape().to_vec();
        let rg = self.nodes[x].requires_grad;
        Ok(self.push(Tensor::from_vec(shape, data), Op::Scale { x, c }, rg))
    }

    /// Message-passing layer y = x w1 + adj x w2 + b over node features
    /// x (n, f_in). The adjacency is captured by value; it is data, not a
    /// differentiable input.
    pub fn graph_conv(&mut self, x: NodeId, adj: &[T], w1: NodeId, w2: NodeId, b: NodeId) -> Result<NodeId> {
        let xv = &self.nodes[x].value;
        let (n, f_in) = match *xv.shape() {
            [n, f] => (n, f),
            _ => return Err(Error::ShapeMismatch { op: "graph_conv", detail: format!("features must be 2-D, got {:?}", xv.shape()) }),
        };
        if adj.len() != n * n {
            return Err(Error::ShapeMismatch { op: "graph_conv", detail: format!("adjacency {} != {n}x{n}", adj.len()) });
        }
        let w1v = &self.nodes[w1].value;
        let w2v = &self.nodes[w2].value;
        let bv = &self.nodes[b].value;
        let f_out = match *w1v.shape() {
            [fi, fo] if fi == f_in => fo,
            _ => return Err(Error::ShapeMismatch { op: "graph_conv", detail: format!("w1 {:?} vs f_in {f_in}", w1v.shape()) }),
        };
        if w2v.shape() != [f_in, f_out] || bv.numel() != f_out {
            return Err(Error::ShapeMismatch {
                op: "graph_conv",
                detail: format!("w2 {:?} or bias {} inconsistent with ({f_in}, {f_out})", w2v.shape(), bv.numel()),
            });
        }
        let (y, ax) = ops::graph_conv_forward(xv.as_slice(), adj, w1v.as_slice(), w2v.as_slice(), bv.as_slice(), n, f_in, f_out);
        self.guard("graph_conv", &y)?;
        let rg = self.any_grad(&[x, w1, w2, b]);
        Ok(self.push(
            Tensor::from_vec(vec![n, f_out], y),
            Op::GraphConv { x, w1, w2, b, adj: adj.to_vec(), ax, n, f_in, f_out },
            rg,
        ))
    }

    /// Chebyshev spectral layer y = sum_k T_k(lhat) x theta_k with the
    /// rescaled Laplacian passed as a dense (n, n) matrix.
    pub fn cheb_conv(&mut self, x: NodeId, lhat: &[T], thetas: &[NodeId]) -> Result<NodeId> {
        if thetas.is_empty() {
            return Err(Error::ShapeMismatch { op: "cheb_conv", detail: "empty filter bank".into() });
        }
        let xv = &self.nodes[x].value;
        let (n, f_in) = match *xv.shape() {
            [n, f] => (n, f),
            _ => return Err(Error::ShapeMismatch { op: "cheb_conv", detail: format!("features must be 2-D, got {:?}", xv.shape()) }),
        };
        if lhat.len() != n * n {
            return Err(Error::ShapeMismatch { op: "cheb_conv", detail: format!("laplacian {} != {n}x{n}", lhat.len()) });
        }
        let f_out = match self.nodes[thetas[0]].value.shape() {
            &[fi, fo] if fi == f_in => fo,
            other => return Err(Error::ShapeMismatch { op: "cheb_conv", detail: format!("theta_0 {other:?} vs f_in {f_in}") }),
        };
        for (k, &th) in thetas.iter().enumerate() {
            if self.nodes[th].value.shape() != [f_in, f_out] {
                return Err(Error::ShapeMismatch {
                    op: "cheb_conv",
                    detail: format!("theta_{k} {:?} != ({f_in}, {f_out})", self.nodes[th].value.shape()),
                });
            }
        }
        let basis = ops::cheb_basis(xv.as_slice(), lhat, n, f_in, thetas.len());
        let theta_slices: Vec<&[T]> = thetas.iter().map(|&t| self.nodes[t].value.as_slice()).collect();
        let y = ops::cheb_forward(&basis, &theta_slices, n, f_in, f_out);
        self.guard("cheb_conv", &y)?;
        let mut ids = thetas.to_vec();
        ids.push(x);
        let rg = self.any_grad(&ids);
        Ok(self.push(
            Tensor::from_vec(vec![n, f_out], y),
            Op::ChebConv { x, thetas: thetas.to_vec(), lhat: lhat.to_vec(), basis, n, f_in, f_out },
            rg,
        ))
    }

    // -- backward ------------------------------------------------------------

    fn ensure_grad(&mut self, id: NodeId) -> &mut [T] {
        let n = self.nodes[id].value.numel();
        self.grads[id].get_or_insert_with(|| vec![T::zero(); n])
    }

    /// Reverse sweep from a scalar loss node. Gradients accumulate, so
    /// multiple backward calls sum unless [`Tape::zero_grads`] intervenes.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss].value.shape()
            )));
        }
        if !self.nodes[loss].requires_grad {
            return Ok(());
        }
        self.in_backward = true;
        let result = self.backward_inner(loss);
        self.in_backward = false;
        result
    }

    fn backward_inner(&mut self, loss: NodeId) -> Result<()> {
        // Each call propagates in a fresh buffer, then folds prior gradients
        // back in, so repeated backward passes add independent contributions.
        let prior = std::mem::replace(&mut self.grads, vec![None; self.nodes.len()]);
        {
            let g = self.ensure_grad(loss);
            g[0] += T::one();
        }
        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.grads[id].take() else { continue };
            self.apply_backward(id, &g)?;
            self.grads[id] = Some(g);
        }
        for (slot, old) in self.grads.iter_mut().zip(prior) {
            let Some(old) = old else { continue };
            match slot {
                Some(new) => {
                    for (a, b) in new.iter_mut().zip(old) {
                        *a += b;
                    }
                }
                None => *slot = Some(old),
            }
        }
        Ok(())
    }

    /// Propagate `g` (the node's output gradient) into its parents.
    fn apply_backward(&mut self, id: NodeId, g: &[T]) -> Result<()> {
        // Parents always precede `id`; values are read from `self.nodes`
        // while gradients are written into the parallel `self.grads`.
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Dense { x, w, b, n_in, n_out } => {
                let (x, w, b, n_in, n_out) = (*x, *w, *b, *n_in, *n_out);
                let need = self.need3(x, w, b);
                let mut bufs = self.take3(x, w, b, need);
                {
                    let xv = self.nodes[x].value.as_slice();
                    let wv = self.nodes[w].value.as_slice();
                    ops::dense_backward(xv, wv, g, n_in, n_out, bufs.0.as_deref_mut(), bufs.1.as_deref_mut(), bufs.2.as_deref_mut());
                }
                self.put3(x, w, b, bufs);
                self.guard_parent_grads("dense", &[x, w, b])?;
            }
            Op::Conv3d { x, k, b, dims } => {
                let (x, k, b, dims) = (*x, *k, *b, *dims);
                let need = self.need3(x, k, b);
                let mut bufs = self.take3(x, k, b, need);
                {
                    let xv = self.nodes[x].value.as_slice();
                    let kv = self.nodes[k].value.as_slice();
                    ops::conv3d_backward(xv, kv, g, &dims, bufs.0.as_deref_mut(), bufs.1.as_deref_mut(), bufs.2.as_deref_mut());
                }
                self.put3(x, k, b, bufs);
                self.guard_parent_grads("conv3d", &[x, k, b])?;
            }
            Op::MaxPool3d { x, .. } => {
                let x = *x;
                if self.nodes[x].requires_grad {
                    let n = self.nodes[x].value.numel();
                    let Tape { nodes, grads, .. } = self;
                    let argmax = match &nodes[id].op {
                        Op::MaxPool3d { argmax, .. } => argmax.as_slice(),
                        _ => unreachable!(),
                    };
                    let dx = grads[x].get_or_insert_with(|| vec![T::zero(); n]);
                    ops::maxpool3d_backward(g, argmax, dx);
                }
            }
            Op::Relu { x } => {
                let x = *x;
                if self.nodes[x].requires_grad {
                    let mode = self.relu_mode;
                    let probe_on = self.relu_probe_min.is_some();
                    let mut local_min = f64::INFINITY;
                    let n = self.nodes[x].value.numel();
                    {
                        let Tape { nodes, grads, .. } = self;
                        let xv = nodes[x].value.as_slice();
                        let dx = grads[x].get_or_insert_with(|| vec![T::zero(); n]);
                        for ((d, &xi), &gi) in dx.iter_mut().zip(xv).zip(g) {
                            let pass = match mode {
                                ReluMode::Standard => xi > T::zero(),
                                ReluMode::Guided => xi > T::zero() && gi > T::zero(),
                                ReluMode::GuidedGradientOnly => gi > T::zero(),
                            };
                            let out = if pass { gi } else { T::zero() };
                            *d += out;
                            if probe_on {
                                let o = out.as_f64();
                                if o < local_min {
                                    local_min = o;
                                }
                            }
                        }
                    }
                    if probe_on {
                        let slot = self.relu_probe_min.as_mut().unwrap();
                        if local_min < *slot {
                            *slot = local_min;
                        }
                    }
                }
            }
            Op::Softmax { x } => {
                let x = *x;
                if self.nodes[x].requires_grad {
                    let n = self.nodes[x].value.numel();
                    let Tape { nodes, grads, .. } = self;
                    let y = nodes[id].value.as_slice();
                    let dx = grads[x].get_or_insert_with(|| vec![T::zero(); n]);
                    ops::softmax_backward(y, g, dx);
                }
            }
            Op::SoftmaxXent { logits, target, weight, .. } => {
                let (l, target, weight) = (*logits, *target, *weight);
                if self.nodes[l].requires_grad {
                    let n = self.nodes[l].value.numel();
                    let Tape { nodes, grads, .. } = self;
                    let probs = match &nodes[id].op {
                        Op::SoftmaxXent { probs, .. } => probs.as_slice(),
                        _ => unreachable!(),
                    };
                    let dx = grads[l].get_or_insert_with(|| vec![T::zero(); n]);
                    ops::softmax_xent_backward(probs, target, weight, g[0], dx);
                }
            }
            Op::Concat { parts } => {
                let parts = parts.clone();
                let mut off = 0;
                for &p in &parts {
                    let n = self.nodes[p].value.numel();
                    if self.nodes[p].requires_grad {
                        let dst = self.ensure_grad(p);
                        for (d, &gv) in dst.iter_mut().zip(&g[off..off + n]) {
                            *d += gv;
                        }
                    }
                    off += n;
                }
            }
            Op::Reshape { x } => {
                let x = *x;
                if self.nodes[x].requires_grad {
                    let dst = self.ensure_grad(x);
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::Select { x, index } => {
                let (x, index) = (*x, *index);
                if self.nodes[x].requires_grad {
                    let dst = self.ensure_grad(x);
                    dst[index] += g[0];
                }
            }
            Op::Sum { x } => {
                let x = *x;
                if self.nodes[x].requires_grad {
                    let dst = self.ensure_grad(x);
                    for d in dst.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                for p in [a, b] {
                    if self.nodes[p].requires_grad {
                        let dst = self.ensure_grad(p);
                        for (d, &gv) in dst.iter_mut().zip(g) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Scale { x, c } => {
                let (x, c) = (*x, *c);
                if self.nodes[x].requires_grad {
                    let dst = self.ensure_grad(x);
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d += c * gv;
                    }
                }
            }
            Op::GraphConv { x, w1, w2, b, n, f_in, f_out, .. } => {
                let (x, w1, w2, b) = (*x, *w1, *w2, *b);
                let (n, f_in, f_out) = (*n, *f_in, *f_out);
                let needs = (
                    self.nodes[x].requires_grad,
                    self.nodes[w1].requires_grad,
                    self.nodes[w2].requires_grad,
                    self.nodes[b].requires_grad,
                );
                let mut dx = if needs.0 { Some(self.take_grad_buf(x)) } else { None };
                let mut dw1 = if needs.1 { Some(self.take_grad_buf(w1)) } else { None };
                let mut dw2 = if needs.2 { Some(self.take_grad_buf(w2)) } else { None };
                let mut db = if needs.3 { Some(self.take_grad_buf(b)) } else { None };
                {
                    let (adj, ax) = match &self.nodes[id].op {
                        Op::GraphConv { adj, ax, .. } => (adj.as_slice(), ax.as_slice()),
                        _ => unreachable!(),
                    };
                    let xv = self.nodes[x].value.as_slice();
                    let w1v = self.nodes[w1].value.as_slice();
                    let w2v = self.nodes[w2].value.as_slice();
                    ops::graph_conv_backward(
                        xv, adj, w1v, w2v, ax, g, n, f_in, f_out,
                        dx.as_deref_mut(), dw1.as_deref_mut(), dw2.as_deref_mut(), db.as_deref_mut(),
                    );
                }
                if let Some(v) = dx { self.grads[x] = Some(v); }
                if let Some(v) = dw1 { self.grads[w1] = Some(v); }
                if let Some(v) = dw2 { self.grads[w2] = Some(v); }
                if let Some(v) = db { self.grads[b] = Some(v); }
                self.guard_parent_grads("graph_conv", &[x, w1, w2, b])?;
            }
            Op::ChebConv { x, thetas, n, f_in, f_out, .. } => {
                let x = *x;
                let thetas = thetas.clone();
                let (n, f_in, f_out) = (*n, *f_in, *f_out);
                let mut dx = if self.nodes[x].requires_grad { Some(self.take_grad_buf(x)) } else { None };
                let mut dths: Vec<Option<Vec<T>>> = thetas
                    .iter()
                    .map(|&t| if self.nodes[t].requires_grad { Some(self.take_grad_buf(t)) } else { None })
                    .collect();
                {
                    let (basis, lhat) = match &self.nodes[id].op {
                        Op::ChebConv { basis, lhat, .. } => (basis, lhat.as_slice()),
                        _ => unreachable!(),
                    };
                    let theta_slices: Vec<&[T]> = thetas.iter().map(|&t| self.nodes[t].value.as_slice()).collect();
                    let dth_refs: Vec<Option<&mut [T]>> = dths.iter_mut().map(|o| o.as_deref_mut()).collect();
                    ops::cheb_backward(basis, &theta_slices, lhat, g, n, f_in, f_out, dx.as_deref_mut(), dth_refs);
                }
                if let Some(v) = dx { self.grads[x] = Some(v); }
                for (t, d) in thetas.iter().zip(dths) {
                    if let Some(v) = d { self.grads[*t] = Some(v); }
                }
                let mut parents = thetas;
                parents.push(x);
                self.guard_parent_grads("cheb_conv", &parents)?;
            }
        }
        Ok(())
    }

    fn need3(&self, a: NodeId, b: NodeId, c: NodeId) -> (bool, bool, bool) {
        (self.nodes[a].requires_grad, self.nodes[b].requires_grad, self.nodes[c].requires_grad)
    }

    fn take_grad_buf(&mut self, id: NodeId) -> Vec<T> {
        let n = self.nodes[id].value.numel();
        self.grads[id].take().unwrap_or_else(|| vec![T::zero(); n])
    }

    fn take3(&mut self, a: NodeId, b: NodeId, c: NodeId, need: (bool, bool, bool)) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
        (
            if need.0 { Some(self.take_grad_buf(a)) } else { None },
            if need.1 { Some(self.take_grad_buf(b)) } else { None },
            if need.2 { Some(self.take_grad_buf(c)) } else { None },
        )
    }

    fn put3(&mut self, a: NodeId, b: NodeId, c: NodeId, bufs: (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>)) {
        if let Some(v) = bufs.0 { self.grads[a] = Some(v); }
        if let Some(v) = bufs.1 { self.grads[b] = Some(v); }
        if let Some(v) = bufs.2 { self.grads[c] = Some(v); }
    }

    fn guard_parent_grads(&self, op: &'static str, parents: &[NodeId]) -> Result<()> {
        if cfg!(debug_assertions) {
            for &p in parents {
                if let Some(gr) = &self.grads[p] {
                    if !gr.iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFinite { op });
                    }
                }
            }
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn force_in_backward(&mut self, v: bool) {
        self.in_backward = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward_matches_manual() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]), true);
        let w = tape.leaf(Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]), true);
        let b = tape.leaf(Tensor::from_vec(vec![2], vec![0.5, -0.5]), true);
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).as_slice(), &[1.5, 1.5]);
    }

    #[test]
    fn backward_rejects_vector_loss() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]), true);
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_accumulates_across_calls_and_resets() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![3], vec![1.0, -2.0, 3.0]), true);
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0, 2.0]);
        tape.zero_grads();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_modes_differ_on_negative_upstream() {
        // y = relu(x) * c with c < 0 makes the upstream gradient negative.
        for (mode, expected) in [
            (ReluMode::Standard, vec![-1.0, 0.0]),
            (ReluMode::Guided, vec![0.0, 0.0]),
            (ReluMode::GuidedGradientOnly, vec![0.0, 0.0]),
        ] {
            let mut tape: Tape<f64> = Tape::with_relu_mode(mode);
            let x = tape.leaf(Tensor::from_vec(vec![2], vec![2.0, -2.0]), true);
            let r = tape.relu(x).unwrap();
            let sc = tape.scale(r, -1.0).unwrap();
            let s = tape.sum(sc).unwrap();
            tape.backward(s).unwrap();
            assert_eq!(tape.grad(x).unwrap(), expected.as_slice(), "mode {mode:?}");
        }
    }

    #[test]
    fn gradient_only_mode_leaks_through_dead_units() {
        // x < 0: standard and guided block, the gradient-only variant does not.
        let mut tape: Tape<f64> = Tape::with_relu_mode(ReluMode::GuidedGradientOnly);
        let x = tape.leaf(Tensor::from_vec(vec![1], vec![-1.0]), true);
        let r = tape.relu(x).unwrap();
        let s = tape.sum(r).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0]);
    }

    #[test]
    fn set_relu_mode_refused_mid_backward() {
        let mut tape: Tape<f64> = Tape::new();
        tape.force_in_backward(true);
        assert!(tape.set_relu_mode(ReluMode::Guided).is_err());
        tape.force_in_backward(false);
        assert!(tape.set_relu_mode(ReluMode::Guided).is_ok());
        assert_eq!(tape.relu_mode(), ReluMode::Guided);
    }

    #[test]
    fn no_grad_leaves_stay_untouched() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]), false);
        let w = tape.leaf(Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
        let b = tape.leaf(Tensor::from_vec(vec![2], vec![0.0, 0.0]), true);
        let y = tape.dense(x, w, b).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert!(tape.grad(x).is_none());
        assert!(tape.grad(w).is_some());
    }

    #[test]
    fn probe_reports_min_gradient_after_relu_step() {
        let mut tape: Tape<f64> = Tape::new();
        tape.enable_relu_probe();
        let x = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, 2.0]), true);
        let r = tape.relu(x).unwrap();
        let sc = tape.scale(r, -2.0).unwrap();
        let s = tape.sum(sc).unwrap();
        tape.backward(s).unwrap();
        // standard mode passes the negative upstream straight through
        assert_eq!(tape.relu_probe_min(), Some(-2.0));
    }
}
