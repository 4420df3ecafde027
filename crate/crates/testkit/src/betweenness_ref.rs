//! Betweenness centrality by exhaustive enumeration of simple paths.
//!
//! Edge weights are connection strengths; the traversal length of an edge is
//! 1/w, and w = 0 means no edge. Two path lengths within a relative 1e-12 of
//! each other count as equally short, mirroring the tie rule of the
//! production Dijkstra route.

const TIE_REL: f64 = 1e-12;

fn tie_tol(a: f64, b: f64) -> f64 {
    TIE_REL * a.abs().max(b.abs()).max(1.0)
}

/// All simple paths from `cur` to `dst`, reported as (interior nodes, length).
fn extend(
    adj: &[f64],
    n: usize,
    cur: usize,
    dst: usize,
    visited: &mut Vec<bool>,
    interior: &mut Vec<usize>,
    len: f64,
    out: &mut Vec<(Vec<usize>, f64)>,
) {
    if cur == dst {
        out.push((interior.clone(), len));
        return;
    }
    for next in 0..n {
        let w = adj[cur * n + next];
        if w <= 0.0 || visited[next] {
            continue;
        }
        visited[next] = true;
        if next != dst {
            interior.push(next);
        }
        extend(adj, n, next, dst, visited, interior, len + 1.0 / w, out);
        if next != dst {
            interior.pop();
        }
        visited[next] = false;
    }
}

/// Betweenness of every node: for each unordered pair, the fraction of
/// shortest paths passing through the node, summed over pairs.
pub fn betweenness_ref(adj: &[f64], n: usize, normalized: bool) -> Vec<f64> {
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in (s + 1)..n {
            let mut paths = Vec::new();
            let mut visited = vec![false; n];
            visited[s] = true;
            extend(adj, n, s, t, &mut visited, &mut Vec::new(), 0.0, &mut paths);
            if paths.is_empty() {
                continue;
            }
            let best = paths.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let shortest: Vec<&(Vec<usize>, f64)> = paths
                .iter()
                .filter(|p| p.1 <= best + tie_tol(p.1, best))
                .collect();
            let sigma = shortest.len() as f64;
            for (interior, _) in &shortest {
                for &v in interior {
                    bc[v] += 1.0 / sigma;
                }
            }
        }
    }
    if normalized && n > 2 {
        let scale = 2.0 / ((n - 1) as f64 * (n - 2) as f64);
        for v in &mut bc {
            *v *= scale;
        }
    }
    bc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_center_carries_the_single_path() {
        let adj = [0., 1., 0., 1., 0., 1., 0., 1., 0.];
        let bc = betweenness_ref(&adj, 3, false);
        assert_eq!(bc, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn unit_triangle_has_no_intermediaries() {
        let adj = [0., 1., 1., 1., 0., 1., 1., 1., 0.];
        assert_eq!(betweenness_ref(&adj, 3, false), vec![0.0; 3]);
    }

    #[test]
    fn equal_detours_split_credit() {
        // 4-cycle with unit weights: each s-t diagonal pair has two 2-hop
        // routes, each interior node carries half per pair.
        let mut adj = [0.0; 16];
        for (i, j) in [(0usize, 1usize), (1, 2), (2, 3), (3, 0)] {
            adj[i * 4 + j] = 1.0;
            adj[j * 4 + i] = 1.0;
        }
        let bc = betweenness_ref(&adj, 4, false);
        for v in bc {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }
}
