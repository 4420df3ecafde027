//! Connectivity graphs: dense symmetric weighted adjacency over a fixed
//! node set. Functional graphs carry signed correlation weights, structural
//! graphs nonnegative streamline counts; both are complete by construction
//! so a dense row-major matrix is the storage format.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Symmetry and zero-diagonal tolerance for incoming matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ConnGraph<T> {
    n: usize,
    weights: Vec<T>,
}

impl<T: Scalar> ConnGraph<T> {
    /// Validate and wrap an n x n weight matrix. Requires finite entries,
    /// symmetry and zero diagonal within [`SYMMETRY_TOL`].
    pub fn new(n: usize, weights: Vec<T>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Graph(format!("weight matrix has {} entries, expected {n}x{n}", weights.len())));
        }
        let tol = T::c(SYMMETRY_TOL);
        for i in 0..n {
            let d = weights[i * n + i];
            if !d.is_finite() {
                return Err(Error::Graph(format!("non-finite weight at ({i}, {i})")));
            }
            if d.abs() > tol {
                return Err(Error::Graph(format!("diagonal entry ({i}, {i}) = {d} is not zero")));
            }
            for j in (i + 1)..n {
                let a = weights[i * n + j];
                let b = weights[j * n + i];
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::Graph(format!("non-finite weight at ({i}, {j})")));
                }
                if (a - b).abs() > tol {
                    return Err(Error::Graph(format!("asymmetric weights at ({i}, {j}): {a} vs {b}")));
                }
            }
        }
        Ok(ConnGraph { n, weights })
    }

    /// Build from the upper triangle of a symmetric matrix, filling both
    /// halves exactly. `upper` is indexed by (i, j) with i < j in row order.
    pub fn from_upper(n: usize, upper: &[T]) -> Result<Self> {
        let expect = n * n.saturating_sub(1) / 2;
        if upper.len() != expect {
            return Err(Error::Graph(format!("upper triangle has {} entries, expected {expect}", upper.len())));
        }
        let mut w = vec![T::zero(); n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = *it.next().unwrap();
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        ConnGraph::new(n, w)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[i * self.n + j]
    }

    /// All-ones n x 1 node feature matrix, the pipeline entry features.
    pub fn unit_features(&self) -> Tensor<T> {
        Tensor::ones(&[self.n, 1])
    }

    /// Largest weight magnitude.
    pub fn max_abs_weight(&self) -> T {
        let mut m = T::zero();
        for &v in &self.weights {
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    /// Check all off-diagonal weights lie in [-1, 1] (functional contract).
    pub fn check_correlation_range(&self) -> Result<()> {
        for (idx, &v) in self.weights.iter().enumerate() {
            if v.abs() > T::one() + T::c(SYMMETRY_TOL) {
                let (i, j) = (idx / self.n, idx % self.n);
                return Err(Error::Graph(format!("correlation weight ({i}, {j}) = {v} outside [-1, 1]")));
            }
        }
        Ok(())
    }

    /// Check all weights are nonnegative (structural contract).
    pub fn check_nonnegative(&self) -> Result<()> {
        for (idx, &v) in self.weights.iter().enumerate() {
            if v < T::zero() {
                let (i, j) = (idx / self.n, idx % self.n);
                return Err(Error::Graph(format!("negative weight ({i}, {j}) = {v} in nonnegative graph")));
            }
        }
        Ok(())
    }

    /// Copy with every weight divided by the max weight, mapping into
    /// [0, 1]. The zero graph is returned unchanged.
    pub fn rescaled_to_unit_max(&self) -> Self {
        let m = self.max_abs_weight();
        if m == T::zero() {
            return self.clone();
        }
        let weights = self.weights.iter().map(|&v| v / m).collect();
        ConnGraph { n: self.n, weights }
    }

    /// Apply a node permutation: node i of the result is node perm[i] of self.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let n = self.n;
        let mut w = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = self.weights[perm[i] * n + perm[j]];
            }
        }
        ConnGraph { n, weights: w }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_and_nonzero_diagonal() {
        let asym = vec![0.0f64, 1.0, 2.0, 0.0];
        assert!(matches!(ConnGraph::new(2, asym), Err(Error::Graph(_))));
        let diag = vec![0.5f64, 1.0, 1.0, 0.0];
        assert!(matches!(ConnGraph::new(2, diag), Err(Error::Graph(_))));
        let nan = vec![0.0f64, f64::NAN, f64::NAN, 0.0];
        assert!(matches!(ConnGraph::new(2, nan), Err(Error::Graph(_))));
    }

    #[test]
    fn upper_triangle_round_trip() {
        let g = ConnGraph::from_upper(3, &[0.5f64, -0.2, 0.1]).unwrap();
        assert_eq!(g.weight(0, 1), 0.5);
        assert_eq!(g.weight(1, 0), 0.5);
        assert_eq!(g.weight(0, 2), -0.2);
        assert_eq!(g.weight(2, 1), 0.1);
        assert_eq!(g.weight(1, 1), 0.0);
    }

    #[test]
    fn range_checks_catch_violations() {
        let g = ConnGraph::from_upper(2, &[1.5f64]).unwrap();
        assert!(g.check_correlation_range().is_err());
        let g = ConnGraph::from_upper(2, &[-0.5f64]).unwrap();
        assert!(g.check_nonnegative().is_err());
        assert!(g.check_correlation_range().is_ok());
    }

    #[test]
    fn rescale_maps_max_to_one() {
        let g = ConnGraph::from_upper(3, &[4.0f32, 8.0, 2.0]).unwrap();
        let r = g.rescaled_to_unit_max();
        assert_eq!(r.weight(0, 2), 1.0);
        assert_eq!(r.weight(0, 1), 0.5);
        let zero = ConnGraph::from_upper(2, &[0.0f32]).unwrap();
        assert_eq!(zero.rescaled_to_unit_max().weights(), zero.weights());
    }
}
