use serde::{Deserialize, Serialize};

use crate::matrix::SquareMatrix;
use crate::{Error, Result};

/// Largest instance the exact solver accepts; the DP table holds
/// `2^k · k` entries.
pub const MAX_EXACT_TSP_NODES: usize = 16;

/// A Hamiltonian path: `order` visits every node once, `total` is the sum of
/// consecutive edge weights along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub order: Vec<usize>,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TspSolver {
    #[default]
    Exact,
    /// Nearest neighbour from every start node followed by 2-opt. No
    /// optimality guarantee; meant for instances above
    /// [`MAX_EXACT_TSP_NODES`].
    Heuristic,
}

pub fn solve_open_loop_tsp(w: &SquareMatrix, solver: TspSolver) -> Result<PathResult> {
    match solver {
        TspSolver::Exact => open_loop_tsp(w),
        TspSolver::Heuristic => open_loop_tsp_heuristic(w),
    }
}

fn check_weights(w: &SquareMatrix) -> Result<()> {
    if w.n() == 0 {
        return Err(Error::CostMatrix("path over zero nodes".into()));
    }
    super::check_entries(w)?;
    if !w.is_symmetric() {
        return Err(Error::CostMatrix("path weights must be symmetric".into()));
    }
    Ok(())
}

fn path_total(w: &SquareMatrix, order: &[usize]) -> f64 {
    order.windows(2).map(|p| w.get(p[0], p[1])).sum()
}

/// Orients `order` so its first node index is below its last.
fn orient(order: &mut [usize]) {
    if order.len() >= 2 && order[order.len() - 1] < order[0] {
        order.reverse();
    }
}

/// Minimum-weight Hamiltonian path (no return edge) by Held-Karp over
/// subsets, every node being a free start.
///
/// Among optimal paths the result is the lexicographically smallest one
/// after orienting each path to start at its smaller endpoint. `total` is
/// summed along the returned order.
pub fn open_loop_tsp(w: &SquareMatrix) -> Result<PathResult> {
    check_weights(w)?;
    let k = w.n();
    if k > MAX_EXACT_TSP_NODES {
        return Err(Error::TspTooLarge {
            got: k,
            max: MAX_EXACT_TSP_NODES,
        });
    }
    if k == 1 {
        return Ok(PathResult {
            order: vec![0],
            total: 0.0,
        });
    }

    let full = (1usize << k) - 1;
    // best[mask * k + v]: cheapest path covering `mask` that ends at `v`
    // (equivalently, by symmetry, starts at `v`).
    let mut best = vec![f64::INFINITY; (full + 1) * k];
    for v in 0..k {
        best[(1 << v) * k + v] = 0.0;
    }
    for mask in 1..=full {
        for v in 0..k {
            let here = best[mask * k + v];
            if mask & (1 << v) == 0 || here == f64::INFINITY {
                continue;
            }
            for u in 0..k {
                if mask & (1 << u) != 0 {
                    continue;
                }
                let next = (mask | (1 << u)) * k + u;
                let cand = here + w.get(v, u);
                if cand < best[next] {
                    best[next] = cand;
                }
            }
        }
    }
    let optimum = (0..k)
        .map(|v| best[full * k + v])
        .fold(f64::INFINITY, f64::min);
    // DP sums and path sums may differ in the last few bits.
    let tol = optimum * 1e-10;

    // The smallest node that ends some optimal path is the smaller endpoint
    // of that path, so starting there yields a correctly oriented path.
    let start = (0..k)
        .find(|&v| best[full * k + v] <= optimum + tol)
        .expect("some node ends an optimal path");
    let mut order = Vec::with_capacity(k);
    order.push(start);
    let mut remaining = full & !(1 << start);
    let mut spent = 0.0;
    let mut cur = start;
    while remaining != 0 {
        let completion = |u: usize| spent + w.get(cur, u) + best[remaining * k + u];
        let candidates = || (0..k).filter(|&u| remaining & (1 << u) != 0);
        let next = candidates()
            .find(|&u| completion(u) <= optimum + tol)
            .unwrap_or_else(|| {
                candidates()
                    .min_by(|&a, &b| completion(a).total_cmp(&completion(b)))
                    .expect("remaining is nonempty")
            });
        spent += w.get(cur, next);
        remaining &= !(1 << next);
        order.push(next);
        cur = next;
    }
    orient(&mut order);
    let total = path_total(w, &order);
    Ok(PathResult { order, total })
}

pub fn open_loop_tsp_heuristic(w: &SquareMatrix) -> Result<PathResult> {
    check_weights(w)?;
    let k = w.n();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for start in 0..k {
        let mut order = nearest_neighbour(w, start);
        two_opt(w, &mut order);
        orient(&mut order);
        let total = path_total(w, &order);
        let better = match &best {
            None => true,
            Some((t, o)) => total < *t || (total == *t && order < *o),
        };
        if better {
            best = Some((total, order));
        }
    }
    let (total, order) = best.expect("k >= 1");
    Ok(PathResult { order, total })
}

fn nearest_neighbour(w: &SquareMatrix, start: usize) -> Vec<usize> {
    let k = w.n();
    let mut visited = vec![false; k];
    let mut order = vec![start];
    visited[start] = true;
    let mut cur = start;
    for _ in 1..k {
        let next = (0..k)
            .filter(|&u| !visited[u])
            .min_by(|&a, &b| w.get(cur, a).total_cmp(&w.get(cur, b)))
            .expect("unvisited node left");
        visited[next] = true;
        order.push(next);
        cur = next;
    }
    order
}

/// Segment reversal until no improving move remains. Reversing a prefix or
/// suffix replaces a single edge, which covers endpoint changes.
fn two_opt(w: &SquareMatrix, order: &mut [usize]) {
    let k = order.len();
    let edge = |o: &[usize], a: usize, b: usize| w.get(o[a], o[b]);
    loop {
        let mut improved = false;
        for i in 0..k {
            for j in i + 1..k {
                let mut before = 0.0;
                let mut after = 0.0;
                if i > 0 {
                    before += edge(order, i - 1, i);
                    after += edge(order, i - 1, j);
                }
                if j + 1 < k {
                    before += edge(order, j, j + 1);
                    after += edge(order, i, j + 1);
                }
                if after < before - 1e-12 * before.abs() {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}
