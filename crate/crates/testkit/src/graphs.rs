//! Seeded random fixtures shared by the oracle test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Symmetric zero-diagonal matrix with entries uniform in [-1, 1].
pub fn signed_graph(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w = rng.gen_range(-1.0..=1.0);
            adj[i * n + j] = w;
            adj[j * n + i] = w;
        }
    }
    adj
}

/// Symmetric zero-diagonal matrix with nonnegative weights; each edge is
/// absent with probability `zero_frac`, otherwise uniform in [0.1, 2.0].
pub fn nonneg_graph(seed: u64, n: usize, zero_frac: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w = if rng.gen::<f64>() < zero_frac {
                0.0
            } else {
                rng.gen_range(0.1..2.0)
            };
            adj[i * n + j] = w;
            adj[j * n + i] = w;
        }
    }
    adj
}

/// Uniform values in [lo, hi).
pub fn uniform_vec(seed: u64, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Tie-free sample pair drawn from uniform grids with distinct offsets.
pub fn tie_free_samples(seed: u64, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut pooled: Vec<f64> = x.iter().chain(&y).copied().collect();
        pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if pooled.windows(2).all(|w| w[0] != w[1]) {
            return (x, y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graphs_are_symmetric_with_zero_diagonal() {
        for (adj, n) in [(signed_graph(7, 5), 5), (nonneg_graph(7, 6, 0.3), 6)] {
            for i in 0..n {
                assert_eq!(adj[i * n + i], 0.0);
                for j in 0..n {
                    assert_eq!(adj[i * n + j], adj[j * n + i]);
                }
            }
        }
    }

    #[test]
    fn seeds_reproduce() {
        assert_eq!(signed_graph(3, 4), signed_graph(3, 4));
        assert_ne!(signed_graph(3, 4), signed_graph(4, 4));
    }
}
