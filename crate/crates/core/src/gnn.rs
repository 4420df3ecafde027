//! Graph-domain neural primitives: the normalized Laplacian, Chebyshev
//! spectral convolution for nonnegative structural graphs, and weighted
//! message-passing convolution for signed functional graphs.
//!
//! Tape-recorded variants live on [`Tape`]; the free functions here build
//! the graph-level inputs (Laplacians, rescaling) and offer non-recorded
//! evaluation used by inference paths and oracle tests.

use crate::error::{Error, Result};
use crate::graph::ConnGraph;
use crate::scalar::Scalar;
use crate::tensor::{NodeId, Tape, Tensor};

/// Spectral rescaling strategy for the Chebyshev basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMax {
    /// Fixed constant, default 2.0 (the Laplacian's upper bound).
    Fixed(f64),
    /// Per-graph largest eigenvalue via power iteration.
    Exact,
}

impl Default for LambdaMax {
    fn default() -> Self {
        LambdaMax::Fixed(2.0)
    }
}

impl LambdaMax {
    /// Stable text form: `fixed:<v>` or `exact`.
    pub fn render(self) -> String {
        match self {
            LambdaMax::Fixed(v) => format!("fixed:{v}"),
            LambdaMax::Exact => "exact".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "exact" {
            return Some(LambdaMax::Exact);
        }
        let v: f64 = s.strip_prefix("fixed:")?.parse().ok()?;
        if v.is_finite() && v > 0.0 {
            Some(LambdaMax::Fixed(v))
        } else {
            None
        }
    }
}

/// Chebyshev filter bank: K coefficient matrices sharing (f_in, f_out).
#[derive(Debug, Clone)]
pub struct ChebFilterBank<T> {
    thetas: Vec<Tensor<T>>,
    lambda_max: LambdaMax,
}

impl<T: Scalar> ChebFilterBank<T> {
    pub fn new(thetas: Vec<Tensor<T>>, lambda_max: LambdaMax) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::Config("Chebyshev filter bank needs K >= 1".into()));
        }
        let shape = thetas[0].shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::Config(format!("Chebyshev coefficients must be 2-D, got {shape:?}")));
        }
        for (k, t) in thetas.iter().enumerate() {
            if t.shape() != shape {
                return Err(Error::Config(format!(
                    "theta_{k} shape {:?} differs from theta_0 {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(ChebFilterBank { thetas, lambda_max })
    }

    pub fn order(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[Tensor<T>] {
        &self.thetas
    }

    pub fn lambda_max(&self) -> LambdaMax {
        self.lambda_max
    }
}

/// L = I - D^{-1/2} A D^{-1/2} with D the diagonal of row sums. Rows of
/// zero-degree nodes reduce to identity rows. Requires nonnegative weights.
pub fn normalized_laplacian<T: Scalar>(g: &ConnGraph<T>) -> Result<Vec<T>> {
    g.check_nonnegative()?;
    let n = g.n_nodes();
    let w = g.weights();
    let mut dinv_sqrt = vec![T::zero(); n];
    for i in 0..n {
        let mut deg = T::zero();
        for j in 0..n {
            deg += w[i * n + j];
        }
        if deg > T::zero() {
            dinv_sqrt[i] = T::one() / deg.sqrt();
        }
    }
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let off = -dinv_sqrt[i] * w[i * n + j] * dinv_sqrt[j];
            l[i * n + j] = if i == j { T::one() + off } else { off };
        }
    }
    Ok(l)
}

/// L_hat = (2 / lambda_max) L - I.
pub fn rescale_laplacian<T: Scalar>(l: &[T], n: usize, lambda_max: T) -> Vec<T> {
    let c = T::c(2.0) / lambda_max;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let v = c * l[i * n + j];
            out.push(if i == j { v - T::one() } else { v });
        }
    }
    out
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
/// deterministic start vector. Adequate for Laplacians (spectrum in [0, 2]).
pub fn power_iteration_lambda_max<T: Scalar>(m: &[T], n: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    // start vector with unequal entries so it is not orthogonal to the
    // dominant eigenvector in symmetric graphs
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::c(i as f64 / n as f64)).collect();
    let mut lambda = T::zero();
    for _ in 0..200 {
        let mut next = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc += m[i * n + j] * v[j];
            }
            next[i] = acc;
        }
        let mut norm = T::zero();
        for &x in &next {
            norm += x * x;
        }
        let norm = norm.sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        for x in &mut next {
            *x /= norm;
        }
        // Rayleigh quotient of the normalized iterate
        let mut num = T::zero();
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc += m[i * n + j] * next[j];
            }
            num += next[i] * acc;
        }
        lambda = num;
        v = next;
    }
    lambda
}

/// Resolve the rescaled Laplacian for a structural graph under the given
/// lambda_max strategy.
pub fn scaled_laplacian<T: Scalar>(g: &ConnGraph<T>, mode: LambdaMax) -> Result<Vec<T>> {
    let l = normalized_laplacian(g)?;
    let lm = match mode {
        LambdaMax::Fixed(v) => {
            if v <= 0.0 {
                return Err(Error::Config(format!("lambda_max must be positive, got {v}")));
            }
            T::c(v)
        }
        LambdaMax::Exact => {
            let lm = power_iteration_lambda_max(&l, g.n_nodes());
            if lm <= T::zero() {
                // zero graph: L = I, lambda_max = 1
                T::one()
            } else {
                lm
            }
        }
    };
    Ok(rescale_laplacian(&l, g.n_nodes(), lm))
}

/// Non-recorded Chebyshev convolution X' = sum_k T_k(L_hat) X theta_k.
pub fn cheb_conv<T: Scalar>(g: &ConnGraph<T>, features: &Tensor<T>, bank: &ChebFilterBank<T>) -> Result<Tensor<T>> {
    let mut tape: Tape<T> = Tape::new();
    let x = tape.leaf(features.clone(), false);
    let thetas: Vec<NodeId> = bank.thetas().iter().map(|t| tape.leaf(t.clone(), false)).collect();
    let y = cheb_conv_t(&mut tape, x, g, &thetas, bank.lambda_max())?;
    Ok(tape.value(y).clone())
}

/// Tape-recorded Chebyshev convolution; `thetas` are parameter leaves.
pub fn cheb_conv_t<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    g: &ConnGraph<T>,
    thetas: &[NodeId],
    mode: LambdaMax,
) -> Result<NodeId> {
    let lhat = scaled_laplacian(g, mode)?;
    tape.cheb_conv(x, &lhat, thetas)
}

/// Non-recorded message-passing convolution X' = X W1 + A X W2 + b.
pub fn graph_conv<T: Scalar>(
    g: &ConnGraph<T>,
    features: &Tensor<T>,
    w1: &Tensor<T>,
    w2: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut tape: Tape<T> = Tape::new();
    let x = tape.leaf(features.clone(), false);
    let w1 = tape.leaf(w1.clone(), false);
    let w2 = tape.leaf(w2.clone(), false);
    let b = tape.leaf(b.clone(), false);
    let y = tape.graph_conv(x, g.weights(), w1, w2, b)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> ConnGraph<f64> {
        ConnGraph::from_upper(3, &[1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn laplacian_of_unit_triangle() {
        let l = normalized_laplacian(&unit_triangle()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { -0.5 };
                assert!((l[i * 3 + j] - expect).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn laplacian_of_zero_graph_is_identity() {
        let g: ConnGraph<f64> = ConnGraph::new(4, vec![0.0; 16]).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(l[i * 4 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn laplacian_rejects_negative_weights() {
        let g = ConnGraph::from_upper(2, &[-0.5f64]).unwrap();
        assert!(matches!(normalized_laplacian(&g), Err(Error::Graph(_))));
    }

    #[test]
    fn laplacian_is_symmetric() {
        use rand::Rng;
        let mut rng = crate::rng::stream(7, "gnn-test", 0);
        for _ in 0..10 {
            let n = 6;
            let upper: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.gen_range(0.0..2.0)).collect();
            let g = ConnGraph::from_upper(n, &upper).unwrap();
            let l = normalized_laplacian(&g).unwrap();
            for i in 0..n {
                for j in 0..n {
                    assert!((l[i * n + j] - l[j * n + i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn order_one_bank_is_pure_linear_map() {
        let g = unit_triangle();
        let feats = Tensor::from_vec(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let theta0 = Tensor::from_vec(vec![2, 2], vec![1.0, 0.5, -0.5, 2.0]);
        let bank = ChebFilterBank::new(vec![theta0.clone()], LambdaMax::default()).unwrap();
        let y = cheb_conv(&g, &feats, &bank).unwrap();
        // X theta_0 by hand
        let mut expect = vec![0.0; 6];
        for i in 0..3 {
            for o in 0..2 {
                for f in 0..2 {
                    expect[i * 2 + o] += feats.as_slice()[i * 2 + f] * theta0.as_slice()[f * 2 + o];
                }
            }
        }
        for (a, b) in y.as_slice().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_bank_is_config_error() {
        let r: Result<ChebFilterBank<f64>> = ChebFilterBank::new(vec![], LambdaMax::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn power_iteration_matches_known_spectrum() {
        // unit triangle Laplacian has eigenvalues {0, 1.5, 1.5}
        let l = normalized_laplacian(&unit_triangle()).unwrap();
        let lm = power_iteration_lambda_max(&l, 3);
        assert!((lm - 1.5).abs() < 1e-9, "{lm}");
    }

    #[test]
    fn graph_conv_zero_neighbor_reduces_to_dense() {
        let g = unit_triangle();
        let feats = Tensor::from_vec(vec![3, 1], vec![1.0, 2.0, 3.0]);
        let w1 = Tensor::from_vec(vec![1, 2], vec![2.0, -1.0]);
        let w2 = Tensor::zeros(&[1, 2]);
        let b = Tensor::from_vec(vec![2], vec![0.5, 0.25]);
        let y = graph_conv(&g, &feats, &w1, &w2, &b).unwrap();
        let expect = [2.5, -0.75, 4.5, -1.75, 6.5, -2.75];
        for (a, b) in y.as_slice().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
