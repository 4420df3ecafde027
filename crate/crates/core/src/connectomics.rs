//! Graph summary measures used for statistical validation: node strength
//! for functional matrices, betweenness centrality for structural matrices.

use crate::error::Result;
use crate::graph::ConnGraph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Strength,
    Betweenness,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Strength => "strength",
            MetricKind::Betweenness => "betweenness",
        }
    }
}

/// Per-node metric values for one subject.
#[derive(Debug, Clone)]
pub struct NodeMetricVector<T> {
    pub kind: MetricKind,
    pub subject: String,
    pub values: Vec<T>,
}

/// s_i = sum_j w_ij over signed weights. With `absolute`, magnitudes are
/// summed instead; the signed sum is the reported default.
pub fn node_strength<T: Scalar>(g: &ConnGraph<T>, absolute: bool) -> Vec<T> {
    let n = g.n_nodes();
    let w = g.weights();
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            let v = w[i * n + j];
            acc += if absolute { v.abs() } else { v };
        }
        s.push(acc);
    }
    s
}

/// Relative tolerance for treating two path lengths as tied.
pub const PATH_TIE_TOL: f64 = 1e-12;

#[inline]
fn tie_tol(a: f64, b: f64) -> f64 {
    PATH_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Betweenness centrality over the strength-to-length inversion d = 1/w
/// (w = 0 means no edge). Brandes' algorithm with weighted Dijkstra;
/// equal-length path multiplicities are merged with [`PATH_TIE_TOL`].
/// `normalized` divides by (n-1)(n-2)/2, the undirected pair count.
pub fn betweenness<T: Scalar>(g: &ConnGraph<T>, normalized: bool) -> Result<Vec<f64>> {
    g.check_nonnegative()?;
    let n = g.n_nodes();
    // edge lengths; f64 throughout so tie handling is precision-independent
    let mut len = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = g.weights()[i * n + j].as_f64();
                if w > 0.0 {
                    len[i * n + j] = 1.0 / w;
                }
            }
        }
    }
    let mut bc = vec![0.0f64; n];
    let mut dist = vec![0.0f64; n];
    let mut sigma = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut settled_order: Vec<usize> = Vec::with_capacity(n);
    let mut settled = vec![false; n];
    for s in 0..n {
        dist.fill(f64::INFINITY);
        sigma.fill(0.0);
        delta.fill(0.0);
        settled.fill(false);
        settled_order.clear();
        for p in &mut pred {
            p.clear();
        }
        dist[s] = 0.0;
        sigma[s] = 1.0;
        loop {
            // O(n) scan suffices for complete graphs of this size
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !settled[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            settled[u] = true;
            settled_order.push(u);
            for v in 0..n {
                let l = len[u * n + v];
                if !l.is_finite() || settled[v] {
                    continue;
                }
                let nd = dist[u] + l;
                if !dist[v].is_finite() || nd < dist[v] - tie_tol(nd, dist[v]) {
                    dist[v] = nd;
                    sigma[v] = sigma[u];
                    pred[v].clear();
                    pred[v].push(u);
                } else if (nd - dist[v]).abs() <= tie_tol(nd, dist[v]) {
                    sigma[v] += sigma[u];
                    pred[v].push(u);
                }
            }
        }
        for &w in settled_order.iter().rev() {
            for &u in &pred[w] {
                delta[u] += sigma[u] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // each undirected pair was counted from both endpoints
    for v in &mut bc {
        *v /= 2.0;
    }
    if normalized && n > 2 {
        let scale = 2.0 / ((n - 1) as f64 * (n - 2) as f64);
        for v in &mut bc {
            *v *= scale;
        }
    }
    Ok(bc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strength_zero_matrix() {
        let g: ConnGraph<f64> = ConnGraph::new(3, vec![0.0; 9]).unwrap();
        assert_eq!(node_strength(&g, false), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn strength_signed_example() {
        // w_12 = 0.5, w_13 = -0.2, w_23 = 0.1 (1-indexed)
        let g = ConnGraph::from_upper(3, &[0.5f64, -0.2, 0.1]).unwrap();
        let s = node_strength(&g, false);
        assert!((s[0] - 0.3).abs() < 1e-15);
        assert!((s[1] - 0.6).abs() < 1e-15);
        assert!((s[2] - (-0.1)).abs() < 1e-15);
        let a = node_strength(&g, true);
        assert!((a[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn strength_is_linear_in_weights() {
        let g = ConnGraph::from_upper(4, &[0.1f64, -0.4, 0.2, 0.6, -0.3, 0.5]).unwrap();
        // Power-of-two factor: scaling commutes with addition exactly.
        let scaled = ConnGraph::new(4, g.weights().iter().map(|&v| v * 4.0).collect()).unwrap();
        let s1 = node_strength(&g, false);
        let s4 = node_strength(&scaled, false);
        for (a, b) in s1.iter().zip(&s4) {
            assert_eq!(a * 4.0, *b);
        }
        // General factor holds to rounding.
        let scaled = ConnGraph::new(4, g.weights().iter().map(|&v| v * 3.0).collect()).unwrap();
        let s3 = node_strength(&scaled, false);
        for (a, b) in s1.iter().zip(&s3) {
            assert!((a * 3.0 - b).abs() < 1e-15);
        }
    }

    #[test]
    fn betweenness_unit_triangle_is_zero() {
        let g = ConnGraph::from_upper(3, &[1.0f64, 1.0, 1.0]).unwrap();
        let bc = betweenness(&g, false).unwrap();
        assert_eq!(bc, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn betweenness_path_graph_center() {
        // a-b and b-c only: every a..c shortest path crosses b
        let g = ConnGraph::from_upper(3, &[1.0f64, 0.0, 1.0]).unwrap();
        let bc = betweenness(&g, false).unwrap();
        assert!((bc[1] - 1.0).abs() < 1e-12, "{bc:?}");
        assert_eq!(bc[0], 0.0);
        assert_eq!(bc[2], 0.0);
        let norm = betweenness(&g, true).unwrap();
        assert!((norm[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn betweenness_splits_tied_paths() {
        // 4-cycle with unit weights: two tied shortest paths between
        // opposite corners, each interior node carries 1/2 per pair
        let n = 4;
        let mut w = vec![0.0f64; 16];
        for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            w[i * n + j] = 1.0;
            w[j * n + i] = 1.0;
        }
        let g = ConnGraph::new(n, w).unwrap();
        let bc = betweenness(&g, false).unwrap();
        for v in bc {
            assert!((v - 0.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn betweenness_scale_invariant() {
        let g = ConnGraph::from_upper(4, &[2.0f64, 0.5, 1.0, 3.0, 0.0, 1.5]).unwrap();
        let scaled = ConnGraph::new(4, g.weights().iter().map(|&v| v * 7.0).collect()).unwrap();
        let a = betweenness(&g, false).unwrap();
        let b = betweenness(&scaled, false).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn betweenness_rejects_negative_weights() {
        let g = ConnGraph::from_upper(3, &[-1.0f64, 1.0, 1.0]).unwrap();
        assert!(betweenness(&g, false).is_err());
    }
}
