//! Nonparametric group comparison: Mann-Whitney U tests with
//! Benjamini-Hochberg FDR correction, applied per modality family.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Outcome of one Mann-Whitney test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwuResult {
    pub u: f64,
    pub p: f64,
    /// Whether the exact enumeration path produced `p`.
    pub exact: bool,
}

/// Pooled sample size at or below which the exact null distribution is
/// enumerated (tie-free samples only).
pub const EXACT_LIMIT: usize = 20;

/// Two-sided Mann-Whitney U test of x against y.
///
/// U counts pairs (x_i, y_j) scored 1 / 0.5 / 0 for x_i greater, tied,
/// smaller. Exact p enumerates the tie-free null distribution when
/// n + m <= [`EXACT_LIMIT`]; otherwise the normal approximation with
/// tie-corrected variance and continuity correction is used.
pub fn mann_whitney(x: &[f64], y: &[f64]) -> Result<MwuResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample("mann_whitney"));
    }
    let (n, m) = (x.len(), y.len());
    let mut u = 0.0f64;
    for &xi in x {
        for &yj in y {
            if xi > yj {
                u += 1.0;
            } else if xi == yj {
                u += 0.5;
            }
        }
    }
    let has_ties = {
        let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pooled.windows(2).any(|w| w[0] == w[1])
    };
    if n + m <= EXACT_LIMIT && !has_ties {
        // U is integral when the pooled sample is tie-free
        let p = exact_two_sided(u.round() as usize, n, m);
        Ok(MwuResult { u, p, exact: true })
    } else {
        let p = normal_two_sided(u, x, y);
        Ok(MwuResult { u, p, exact: false })
    }
}

/// Counts of arrangements per integer U value under the tie-free null.
/// Conditioning on whether the largest pooled value is an x (it then beats
/// all j current ys) or a y gives f(i, j, u) = f(i-1, j, u-j) + f(i, j-1, u).
fn exact_dist(n: usize, m: usize) -> Vec<f64> {
    // col[i] = counts over u for i xs and the current y count; start at j = 0
    let mut col: Vec<Vec<f64>> = (0..=n).map(|_| vec![1.0]).collect();
    for j in 1..=m {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        next.push(vec![1.0]);
        for i in 1..=n {
            let mut c = vec![0.0f64; i * j + 1];
            for (u, &v) in col[i].iter().enumerate() {
                c[u] += v;
            }
            for (u, &v) in next[i - 1].iter().enumerate() {
                c[u + j] += v;
            }
            next.push(c);
        }
        col = next;
    }
    col.swap_remove(n)
}

/// Exact two-sided p for integer U: 2 * min(P(U <= u), P(U >= u)), capped.
fn exact_two_sided(u: usize, n: usize, m: usize) -> f64 {
    let counts = exact_dist(n, m);
    let total: f64 = counts.iter().sum();
    let le: f64 = counts[..=u].iter().sum();
    let ge: f64 = counts[u..].iter().sum();
    (2.0 * le.min(ge) / total).min(1.0)
}

fn normal_two_sided(u: f64, x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = y.len() as f64;
    let nt = n + m;
    let mean = n * m / 2.0;
    // tie correction over pooled tie groups
    let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j] == pooled[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * m / 12.0 * (nt + 1.0 - tie_term / (nt * (nt - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let diff = u - mean;
    if diff == 0.0 {
        return 1.0;
    }
    let z = (diff.abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Benjamini-Hochberg step-up adjustment. Returns adjusted p values in the
/// original order plus rejection flags at level `alpha`.
pub fn fdr_bh(p: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    for &v in p {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Config(format!("p value {v} outside (0, 1]")));
        }
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
    let mut q = vec![0.0f64; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let scaled = (p[idx] * m as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(scaled);
        q[idx] = running;
    }
    let reject = q.iter().map(|&v| v <= alpha).collect();
    Ok((q, reject))
}

/// Group difference direction, named from the NEG-class perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    NegGtPos,
    NegLtPos,
    NotSignificant,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::NegGtPos => "NEG>POS",
            Direction::NegLtPos => "NEG<POS",
            Direction::NotSignificant => "n.s.",
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TestResult {
    pub feature: String,
    pub u: f64,
    pub p: f64,
    pub p_fdr: f64,
    pub direction: Direction,
    pub n_neg: usize,
    pub n_pos: usize,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One Mann-Whitney test per feature with FDR applied across the given
/// family (callers pass one modality's features per call). `neg` and `pos`
/// hold per-subject feature values, one row per feature, restricted to
/// correctly classified subjects.
pub fn group_compare(
    names: &[String],
    neg: &[Vec<f64>],
    pos: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<TestResult>> {
    if names.len() != neg.len() || names.len() != pos.len() {
        return Err(Error::Config(format!(
            "group_compare got {} names, {} NEG rows, {} POS rows",
            names.len(),
            neg.len(),
            pos.len()
        )));
    }
    if neg.iter().any(|v| v.is_empty()) {
        return Err(Error::EmptySample("group_compare NEG class"));
    }
    if pos.iter().any(|v| v.is_empty()) {
        return Err(Error::EmptySample("group_compare POS class"));
    }
    let mut tests = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let r = mann_whitney(&neg[i], &pos[i])?;
        tests.push((name.clone(), r, median(&neg[i]), median(&pos[i]), neg[i].len(), pos[i].len()));
    }
    let pvals: Vec<f64> = tests.iter().map(|t| t.1.p).collect();
    let (q, reject) = fdr_bh(&pvals, alpha)?;
    Ok(tests
        .into_iter()
        .zip(q.iter().zip(&reject))
        .map(|((feature, r, med_n, med_p, n_neg, n_pos), (&p_fdr, &rej))| {
            let direction = if !rej {
                Direction::NotSignificant
            } else if med_n > med_p {
                Direction::NegGtPos
            } else if med_n < med_p {
                Direction::NegLtPos
            } else if r.u > n_neg as f64 * n_pos as f64 / 2.0 {
                // medians tied; fall back to the U statistic's side
                Direction::NegGtPos
            } else {
                Direction::NegLtPos
            };
            TestResult { feature, u: r.u, p: r.p, p_fdr, direction, n_neg, n_pos }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_half_u_and_p_one() {
        let x = [1.0, 2.0, 3.0];
        let r = mann_whitney(&x, &x).unwrap();
        assert_eq!(r.u, 4.5);
        assert_eq!(r.p, 1.0);
        assert!(!r.exact, "ties force the approximation path");
    }

    #[test]
    fn separated_pairs_exact_p() {
        let r = mann_whitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p - 2.0 / 6.0).abs() < 1e-12, "{}", r.p);
    }

    #[test]
    fn u_complement_identity() {
        let x = [0.3, 1.7, 2.2, 0.9];
        let y = [1.1, 0.4, 2.8];
        let a = mann_whitney(&x, &y).unwrap();
        let b = mann_whitney(&y, &x).unwrap();
        assert_eq!(a.u + b.u, 12.0);
        assert!((a.p - b.p).abs() < 1e-12);
    }

    #[test]
    fn monotone_transform_invariance() {
        let x = [0.3, 1.7, 2.2, 0.9, 5.1];
        let y = [1.1, 0.4, 2.8, 3.3];
        let fx: Vec<f64> = x.iter().map(|&v: &f64| v.exp()).collect();
        let fy: Vec<f64> = y.iter().map(|&v: &f64| v.exp()).collect();
        let a = mann_whitney(&x, &y).unwrap();
        let b = mann_whitney(&fx, &fy).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn empty_sample_is_error() {
        assert!(matches!(mann_whitney(&[], &[1.0]), Err(Error::EmptySample(_))));
    }

    #[test]
    fn bh_equal_spacing_example() {
        let (q, rej) = fdr_bh(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
        for v in &q {
            assert!((v - 0.04).abs() < 1e-12, "{q:?}");
        }
        assert_eq!(rej, vec![true; 4]);
    }

    #[test]
    fn bh_single_p_unchanged() {
        let (q, _) = fdr_bh(&[0.37], 0.05).unwrap();
        assert_eq!(q, vec![0.37]);
    }

    #[test]
    fn bh_all_ones() {
        let (q, rej) = fdr_bh(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(q, vec![1.0, 1.0, 1.0]);
        assert!(rej.iter().all(|&r| !r));
    }

    #[test]
    fn bh_rejects_out_of_range() {
        assert!(fdr_bh(&[0.0], 0.05).is_err());
        assert!(fdr_bh(&[1.2], 0.05).is_err());
    }

    #[test]
    fn bh_preserves_p_order() {
        let p = [0.004, 0.1, 0.03, 0.6, 0.02, 0.8];
        let (q, _) = fdr_bh(&p, 0.05).unwrap();
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    assert!(q[i] <= q[j] + 1e-15);
                }
            }
        }
    }

    #[test]
    fn group_compare_directions() {
        let names = vec!["up".to_string(), "down".to_string()];
        let neg = vec![vec![5.0, 6.0, 7.0, 8.0, 9.0, 5.5, 6.5, 7.5], vec![1.0, 2.0, 1.5, 2.5, 1.2, 2.2, 1.7, 2.7]];
        let pos = vec![vec![1.0, 2.0, 1.5, 2.5, 1.2, 2.2, 1.7, 2.7], vec![5.0, 6.0, 7.0, 8.0, 9.0, 5.5, 6.5, 7.5]];
        let res = group_compare(&names, &neg, &pos, 0.05).unwrap();
        assert_eq!(res[0].direction, Direction::NegGtPos);
        assert_eq!(res[1].direction, Direction::NegLtPos);
        for r in &res {
            assert!(r.p_fdr >= r.p - 1e-15);
        }
    }

    #[test]
    fn group_compare_empty_class_is_error() {
        let names = vec!["f".to_string()];
        let res = group_compare(&names, &[vec![]], &[vec![1.0]], 0.05);
        assert!(matches!(res, Err(Error::EmptySample(_))));
    }
}
