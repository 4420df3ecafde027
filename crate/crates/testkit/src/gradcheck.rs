//! Central-difference gradients and error metrics for gradient checking.

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let saved = probe[i];
        probe[i] = saved + eps;
        let up = f(&probe);
        probe[i] = saved - eps;
        let down = f(&probe);
        probe[i] = saved;
        grad.push((up - down) / (2.0 * eps));
    }
    grad
}

/// Largest relative error between analytic and finite-difference gradients.
/// `floor` bounds the denominator so near-zero entries compare absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
