//! Rank-test oracles: Mann-Whitney U by full permutation enumeration and a
//! literal Benjamini-Hochberg step-up.

/// U statistic for x against y: one point per strictly greater pair, half a
/// point per tie.
pub fn u_stat(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for &a in x {
        for &b in y {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

fn combinations(pool: usize, take: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, pool: usize, left: usize, picked: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if left == 0 {
            visit(picked);
            return;
        }
        for i in start..=(pool - left) {
            picked.push(i);
            rec(i + 1, pool, left - 1, picked, visit);
            picked.pop();
        }
    }
    rec(0, pool, take, &mut Vec::new(), visit);
}

/// Exact two-sided p for tie-free samples: enumerate every assignment of the
/// pooled values into groups of the observed sizes, tally the U distribution,
/// and fold the observed value two-sided. Panics on ties; the oracle only
/// covers the exact path.
pub fn exact_two_sided_p(x: &[f64], y: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(
        pooled.windows(2).all(|w| w[0] != w[1]),
        "exact oracle requires tie-free data"
    );
    let n = x.len();
    let u_obs = u_stat(x, y);
    let mut at_or_below = 0u64;
    let mut at_or_above = 0u64;
    let mut total = 0u64;
    combinations(pooled.len(), n, &mut |idx: &[usize]| {
        let xs: Vec<f64> = idx.iter().map(|&i| pooled[i]).collect();
        let ys: Vec<f64> = (0..pooled.len())
            .filter(|i| !idx.contains(i))
            .map(|i| pooled[i])
            .collect();
        let u = u_stat(&xs, &ys);
        if u <= u_obs {
            at_or_below += 1;
        }
        if u >= u_obs {
            at_or_above += 1;
        }
        total += 1;
    });
    let tail = (at_or_below.min(at_or_above) as f64) / total as f64;
    (2.0 * tail).min(1.0)
}

/// Benjamini-Hochberg adjusted p values, computed exactly as written in the
/// textbook: sort ascending, q_(i) = p_(i) * m / i, running minimum from the
/// largest rank down, cap at 1, undo the sort.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        let q = p[idx] * m as f64 / rank as f64;
        running = running.min(q).min(1.0);
        adjusted[idx] = running;
    }
    adjusted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_counts_pairs() {
        assert_eq!(u_stat(&[3.0, 4.0], &[1.0, 2.0]), 4.0);
        assert_eq!(u_stat(&[1.0, 2.0], &[3.0, 4.0]), 0.0);
    }

    #[test]
    fn extreme_split_has_p_two_over_binomial() {
        let p = exact_two_sided_p(&[1.0, 2.0], &[3.0, 4.0]);
        assert!((p - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn bh_equalizes_the_arithmetic_ladder() {
        let adj = bh_adjust(&[0.01, 0.02, 0.03, 0.04]);
        for q in adj {
            assert!((q - 0.04).abs() < 1e-15);
        }
    }
}
