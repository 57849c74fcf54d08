//! Exact solvers for the two inner problems of the pipeline cost: minimum
//! bottleneck perfect matching between two device groups, and the minimum
//! Hamiltonian path over groups.
//!
//! Both solvers break ties lexicographically so that the same input always
//! yields the same pairing or order.

mod matching;
mod tsp;

pub use matching::{bottleneck_perfect_matching, MatchingResult};
pub use tsp::{
    open_loop_tsp, open_loop_tsp_heuristic, solve_open_loop_tsp, PathResult, TspSolver,
    MAX_EXACT_TSP_NODES,
};

use crate::matrix::SquareMatrix;
use crate::{Error, Result};

/// Square matrix of nonnegative finite pairing costs (seconds); entry
/// `(i, j)` is the cost of pairing row `i` with column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(SquareMatrix);

impl CostMatrix {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        check_entries(&m)?;
        Ok(CostMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = SquareMatrix::from_rows(rows).map_err(|(row, len)| {
            Error::CostMatrix(format!(
                "row {row} has {len} entries, expected {}",
                rows.len()
            ))
        })?;
        Self::new(m)
    }

    pub fn k(&self) -> usize {
        self.0.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &SquareMatrix {
        &self.0
    }
}

pub(crate) fn check_entries(m: &SquareMatrix) -> Result<()> {
    for i in 0..m.n() {
        for j in 0..m.n() {
            let v = m.get(i, j);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::CostMatrix(format!(
                    "entry ({i},{j}) = {v} is not finite and nonnegative"
                )));
            }
        }
    }
    Ok(())
}
