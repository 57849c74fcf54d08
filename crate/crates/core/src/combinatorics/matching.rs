use serde::{Deserialize, Serialize};

use super::CostMatrix;

/// A perfect matching: `pairs[row] = column`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingResult {
    pub pairs: Vec<usize>,
    pub bottleneck: f64,
}

/// Minimum-bottleneck perfect matching.
///
/// Binary search over the distinct entries for the smallest threshold that
/// still admits a perfect matching (Kuhn's augmenting paths on the entries
/// at or below it), then the lexicographically smallest perfect matching at
/// that threshold.
pub fn bottleneck_perfect_matching(c: &CostMatrix) -> MatchingResult {
    let k = c.k();
    if k == 0 {
        return MatchingResult {
            pairs: Vec::new(),
            bottleneck: 0.0,
        };
    }

    let mut values: Vec<f64> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| c.get(i, j))
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    // The largest entry admits the complete bipartite graph, so `hi` is
    // always feasible.
    let (mut lo, mut hi) = (0, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if Bipartite::new(c, values[mid]).perfect_matching().is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let threshold = values[lo];
    let graph = Bipartite::new(c, threshold);
    let mut m = graph
        .perfect_matching()
        .expect("threshold admits a perfect matching");
    graph.make_lexicographically_smallest(&mut m);

    let bottleneck = m
        .row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| c.get(i, j))
        .fold(0.0, f64::max);
    MatchingResult {
        pairs: m.row_to_col,
        bottleneck,
    }
}

struct Bipartite {
    k: usize,
    // adjacency by row, columns ascending
    adj: Vec<Vec<usize>>,
}

struct Matching {
    row_to_col: Vec<usize>,
    col_to_row: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl Bipartite {
    fn new(c: &CostMatrix, threshold: f64) -> Self {
        let k = c.k();
        let adj = (0..k)
            .map(|i| (0..k).filter(|&j| c.get(i, j) <= threshold).collect())
            .collect();
        Bipartite { k, adj }
    }

    fn perfect_matching(&self) -> Option<Matching> {
        let mut row_to_col = vec![NONE; self.k];
        let mut col_to_row = vec![NONE; self.k];
        let mut visited = vec![false; self.k];
        for r in 0..self.k {
            visited.fill(false);
            if !self.augment(r, &mut row_to_col, &mut col_to_row, &mut visited) {
                return None;
            }
        }
        Some(Matching {
            row_to_col,
            col_to_row,
        })
    }

    fn augment(
        &self,
        r: usize,
        row_to_col: &mut [usize],
        col_to_row: &mut [usize],
        visited: &mut [bool],
    ) -> bool {
        for &c in &self.adj[r] {
            if visited[c] {
                continue;
            }
            visited[c] = true;
            if col_to_row[c] == NONE || self.augment(col_to_row[c], row_to_col, col_to_row, visited)
            {
                row_to_col[r] = c;
                col_to_row[c] = r;
                return true;
            }
        }
        false
    }

    /// Rewrites `m` into the lexicographically smallest perfect matching of
    /// this graph. Row by row, the smallest column `c` is taken for which an
    /// alternating path lets the current owner of `c` move over, using only
    /// rows not yet fixed.
    fn make_lexicographically_smallest(&self, m: &mut Matching) {
        let mut visited = vec![false; self.k];
        for i in 0..self.k {
            for &c in &self.adj[i] {
                let current = m.row_to_col[i];
                if c == current {
                    break;
                }
                let owner = m.col_to_row[c];
                if owner < i {
                    continue;
                }
                visited.fill(false);
                visited[c] = true;
                if self.reroute(owner, i, current, m, &mut visited) {
                    m.row_to_col[i] = c;
                    m.col_to_row[c] = i;
                    break;
                }
            }
        }
    }

    // Finds a new column for row `r` among unfixed rows (> `fixed`), ending
    // at `free`, the column row `fixed` is about to give up.
    fn reroute(
        &self,
        r: usize,
        fixed: usize,
        free: usize,
        m: &mut Matching,
        visited: &mut [bool],
    ) -> bool {
        for &c in &self.adj[r] {
            if visited[c] {
                continue;
            }
            visited[c] = true;
            let ok = if c == free {
                true
            } else {
                let next = m.col_to_row[c];
                next > fixed && self.reroute(next, fixed, free, m, visited)
            };
            if ok {
                m.row_to_col[r] = c;
                m.col_to_row[c] = r;
                return true;
            }
        }
        false
    }
}
