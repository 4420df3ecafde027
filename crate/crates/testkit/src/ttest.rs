//! Welch's t-test, used to verify planted effect sizes in generated cohorts.

use statrs::distribution::{ContinuousCDF, StudentsT};

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t statistic and two-sided p value.
pub fn welch(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert!(x.len() >= 2 && y.len() >= 2, "need at least two points per group");
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let nx = x.len() as f64;
    let ny = y.len() as f64;
    let se2 = vx / nx + vy / ny;
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / ((vx / nx).powi(2) / (nx - 1.0) + (vy / ny).powi(2) / (ny - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_samples_give_zero_t() {
        let (t, p) = welch(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert!(t.abs() < 1e-12);
        assert!((p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separated_samples_reject() {
        let x: Vec<f64> = (0..30).map(|i| 10.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = (0..30).map(|i| 0.0 + 0.1 * i as f64).collect();
        let (t, p) = welch(&x, &y);
        assert!(t > 10.0);
        assert!(p < 1e-10);
    }
}
