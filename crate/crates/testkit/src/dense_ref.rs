//! Dense-algebra reference route for the graph operators, via nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric normalized Laplacian L = I - D^{-1/2} A D^{-1/2}. Zero-degree
/// nodes keep their identity row.
pub fn laplacian(adj: &DMatrix<f64>) -> DMatrix<f64> {
    let n = adj.nrows();
    let mut dinv_sqrt = DVector::zeros(n);
    for i in 0..n {
        let deg: f64 = adj.row(i).iter().sum();
        if deg > 0.0 {
            dinv_sqrt[i] = 1.0 / deg.sqrt();
        }
    }
    let mut l = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] -= dinv_sqrt[i] * adj[(i, j)] * dinv_sqrt[j];
        }
    }
    l
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_eigen(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Chebyshev filter applied through explicit dense polynomial matrices:
/// Y = sum_k T_k(Lhat) X Theta_k with T_0 = I, T_1 = Lhat,
/// T_k = 2 Lhat T_{k-1} - T_{k-2}.
pub fn cheb_apply(lhat: &DMatrix<f64>, x: &DMatrix<f64>, thetas: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = lhat.nrows();
    let f_out = thetas[0].ncols();
    let mut polys: Vec<DMatrix<f64>> = Vec::with_capacity(thetas.len());
    for k in 0..thetas.len() {
        let t_k = match k {
            0 => DMatrix::identity(n, n),
            1 => lhat.clone(),
            _ => 2.0 * lhat * &polys[k - 1] - &polys[k - 2],
        };
        polys.push(t_k);
    }
    let mut y = DMatrix::zeros(n, f_out);
    for (t_k, theta) in polys.iter().zip(thetas) {
        y += t_k * x * theta;
    }
    y
}

/// Slice front-end for `cheb_apply`. Adjacency, features, and filters are
/// row-major; `lambda_max = None` means exact eigenvalue rescaling.
pub fn cheb_ref(
    adj: &[f64],
    n: usize,
    x: &[f64],
    f_in: usize,
    thetas: &[Vec<f64>],
    f_out: usize,
    lambda_max: Option<f64>,
) -> Vec<f64> {
    let a = DMatrix::from_row_slice(n, n, adj);
    let xm = DMatrix::from_row_slice(n, f_in, x);
    let l = laplacian(&a);
    let lm = lambda_max.unwrap_or_else(|| lambda_max_eigen(&l));
    let lhat = (2.0 / lm) * &l - DMatrix::identity(n, n);
    let th: Vec<DMatrix<f64>> = thetas
        .iter()
        .map(|t| DMatrix::from_row_slice(f_in, f_out, t))
        .collect();
    let y = cheb_apply(&lhat, &xm, &th);
    row_major(&y)
}

/// Message-passing layer as plain matrix algebra: Y = X W1 + A X W2 + 1 b^T.
pub fn graph_conv_ref(
    adj: &[f64],
    n: usize,
    x: &[f64],
    f_in: usize,
    w1: &[f64],
    w2: &[f64],
    b: &[f64],
    f_out: usize,
) -> Vec<f64> {
    let a = DMatrix::from_row_slice(n, n, adj);
    let xm = DMatrix::from_row_slice(n, f_in, x);
    let w1m = DMatrix::from_row_slice(f_in, f_out, w1);
    let w2m = DMatrix::from_row_slice(f_in, f_out, w2);
    let mut y = &xm * &w1m + a * &xm * &w2m;
    for i in 0..n {
        for j in 0..f_out {
            y[(i, j)] += b[j];
        }
    }
    row_major(&y)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_laplacian_matches_hand_values() {
        let a = DMatrix::from_row_slice(3, 3, &[0., 1., 1., 1., 0., 1., 1., 1., 0.]);
        let l = laplacian(&a);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { -0.5 };
                assert!((l[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cheb_order_one_is_plain_linear_map() {
        let adj = [0., 0.7, 0.7, 0.];
        let x = [1.0, 2.0];
        let theta = vec![vec![3.0]];
        let y = cheb_ref(&adj, 2, &x, 1, &theta, 1, Some(2.0));
        assert!((y[0] - 3.0).abs() < 1e-12 && (y[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn graph_conv_zero_adjacency_reduces_to_dense() {
        let y = graph_conv_ref(&[0.0; 4], 2, &[1., 2.], 1, &[2.0], &[5.0], &[0.5], 1);
        assert_eq!(y, vec![2.5, 4.5]);
    }
}
