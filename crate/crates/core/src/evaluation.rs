//! Concrete device layouts: building them from partitions, checking them,
//! scoring them as given, and comparing the scheduler against baselines.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::PathResult;
use crate::costmodel::{
    coarsen, comm_cost, datap_cost_group, pipeline_cost_with, pipeline_link_cost, CostBreakdown,
    Partition,
};
use crate::netmodel::{CommGraph, DeviceId};
use crate::rng;
use crate::scheduler::{evolve, LocalSearchKind, ScheduleConfig};
use crate::workload::{validate_workload, WorkloadSpec};
use crate::{Error, Result};

/// A full layout. `grid[i][j]` is the device running stage `j` for
/// macro-batch `i`, so rows are pipelines and columns are data-parallel
/// groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub grid: Vec<Vec<DeviceId>>,
    /// Partition group placed in each column.
    #[serde(default)]
    pub order: Vec<usize>,
    /// For each adjacent column pair, the `(column j, column j+1)` device
    /// pairs along the rows.
    #[serde(default)]
    pub matchings: Vec<Vec<(DeviceId, DeviceId)>>,
}

impl Assignment {
    /// Builds an assignment from a grid, deriving `order` as the identity and
    /// `matchings` from the rows.
    pub fn from_grid(grid: Vec<Vec<DeviceId>>) -> Self {
        let cols = grid.first().map_or(0, Vec::len);
        let matchings = row_pairings(&grid);
        Assignment {
            grid,
            order: (0..cols).collect(),
            matchings,
        }
    }

    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    pub fn cols(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn column(&self, j: usize) -> Vec<DeviceId> {
        self.grid.iter().map(|row| row[j]).collect()
    }
}

fn row_pairings(grid: &[Vec<DeviceId>]) -> Vec<Vec<(DeviceId, DeviceId)>> {
    let cols = grid.first().map_or(0, Vec::len);
    (0..cols.saturating_sub(1))
        .map(|j| grid.iter().map(|row| (row[j], row[j + 1])).collect())
        .collect()
}

/// Lays a partition out on a grid: columns follow the optimal stage order,
/// the first column is sorted, and every later column is row-aligned through
/// the bottleneck matching with its predecessor.
pub fn materialize(g: &CommGraph, p: &Partition, w: &WorkloadSpec) -> Result<Assignment> {
    p.check_shape(g, w)?;
    let cg = coarsen(g, p, w);
    let path = pipeline_cost_with(&cg, Default::default())?;
    let groups = p.groups();
    // ranks[i]: member rank of row i within the current column's group
    let mut ranks: Vec<usize> = (0..p.d_dp()).collect();
    let mut grid = vec![Vec::with_capacity(p.d_pp()); p.d_dp()];
    for (step, &grp) in path.order.iter().enumerate() {
        if step > 0 {
            let map = cg.rank_map(path.order[step - 1], grp);
            for r in &mut ranks {
                *r = map[*r];
            }
        }
        for (row, &r) in grid.iter_mut().zip(&ranks) {
            row.push(groups[grp][r]);
        }
    }
    let matchings = row_pairings(&grid);
    Ok(Assignment {
        grid,
        order: path.order,
        matchings,
    })
}

/// Accepts iff the grid is rectangular and a bijection onto `0..n`, and any
/// stored order and matchings agree with it.
pub fn validate_assignment(a: &Assignment, n: usize) -> Result<()> {
    let cols = a.cols();
    if a.rows() == 0 || cols == 0 {
        return Err(Error::AssignmentShape("empty grid".into()));
    }
    if let Some((i, row)) = a.grid.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::AssignmentShape(format!(
            "row {i} has {} entries, expected {cols}",
            row.len()
        )));
    }
    let mut seen = vec![false; n];
    for &d in a.grid.iter().flatten() {
        if d.0 >= n {
            return Err(Error::DeviceOutOfRange(d.0, n));
        }
        if std::mem::replace(&mut seen[d.0], true) {
            return Err(Error::DuplicateDevice(d.0));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingDevice(missing));
    }
    if !a.order.is_empty() {
        let mut sorted = a.order.clone();
        sorted.sort_unstable();
        if sorted != (0..cols).collect::<Vec<_>>() {
            return Err(Error::AssignmentShape(format!(
                "order {:?} is not a permutation of {cols} stages",
                a.order
            )));
        }
    }
    if !a.matchings.is_empty() && a.matchings != row_pairings(&a.grid) {
        return Err(Error::AssignmentShape(
            "matchings do not follow the grid rows".into(),
        ));
    }
    Ok(())
}

/// Scores a layout exactly as given: no matching or stage order is
/// re-optimized.
pub fn evaluate_assignment(
    g: &CommGraph,
    a: &Assignment,
    w: &WorkloadSpec,
) -> Result<CostBreakdown> {
    validate_workload(w, g.n())?;
    validate_assignment(a, g.n())?;
    if (a.rows(), a.cols()) != (w.d_dp, w.d_pp) {
        return Err(Error::AssignmentShape(format!(
            "grid is {}x{}, workload needs {}x{} (d_dp x d_pp)",
            a.rows(),
            a.cols(),
            w.d_dp,
            w.d_pp
        )));
    }
    let per_group_datap: Vec<f64> = (0..a.cols())
        .map(|j| datap_cost_group(g, &a.column(j), w))
        .collect();
    let datap = per_group_datap.iter().copied().fold(0.0, f64::max);
    let pipelinep: f64 = (0..a.cols().saturating_sub(1))
        .map(|j| {
            a.grid
                .iter()
                .map(|row| pipeline_link_cost(g, row[j], row[j + 1], w))
                .fold(0.0, f64::max)
        })
        .sum();
    let order = if a.order.is_empty() {
        (0..a.cols()).collect()
    } else {
        a.order.clone()
    };
    Ok(CostBreakdown {
        datap,
        pipelinep,
        total: datap + pipelinep,
        per_group_datap,
        pipeline_order: PathResult {
            order,
            total: pipelinep,
        },
    })
}

/// A seeded layout with no scheduling: shuffled devices filled column by
/// column, so stage order and row pairings are whatever the shuffle gives.
pub fn random_assignment(n: usize, w: &WorkloadSpec, seed: u64, stream: u64) -> Result<Assignment> {
    validate_workload(w, n)?;
    let mut devices: Vec<DeviceId> = (0..n).map(DeviceId).collect();
    devices.shuffle(&mut rng::seeded_stream(seed, stream));
    let grid = (0..w.d_dp)
        .map(|i| (0..w.d_pp).map(|j| devices[j * w.d_dp + i]).collect())
        .collect();
    Ok(Assignment::from_grid(grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scheduled: CostBreakdown,
    pub scheduled_partition: Partition,
    pub random_stats: RandomStats,
    pub random_totals: Vec<f64>,
    pub kl_total: Option<f64>,
    /// Mean random total over the scheduled total.
    pub speedup_vs_mean_random: f64,
}

/// Runs the scheduler with `cfg`, the same budget with the KL local search
/// (skipped when `cfg` already uses KL), and `random_trials` random layouts.
pub fn compare_baselines(
    g: &CommGraph,
    w: &WorkloadSpec,
    cfg: &ScheduleConfig,
    random_trials: usize,
) -> Result<ComparisonReport> {
    if random_trials == 0 {
        return Err(Error::Config("random_trials must be >= 1".into()));
    }
    let ours = evolve(g, w, cfg)?;
    let kl_total = if cfg.local_search == LocalSearchKind::Kl {
        None
    } else {
        let kl_cfg = ScheduleConfig {
            local_search: LocalSearchKind::Kl,
            ..cfg.clone()
        };
        Some(evolve(g, w, &kl_cfg)?.best_cost.total)
    };
    let random_totals: Vec<f64> = (0..random_trials as u64)
        .into_par_iter()
        .map(|t| {
            let a = random_assignment(g.n(), w, cfg.seed, t)?;
            Ok(evaluate_assignment(g, &a, w)?.total)
        })
        .collect::<Result<_>>()?;
    let mean = random_totals.iter().sum::<f64>() / random_trials as f64;
    let random_stats = RandomStats {
        min: random_totals.iter().copied().fold(f64::INFINITY, f64::min),
        mean,
        max: random_totals
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        count: random_trials,
    };
    debug_assert_eq!(
        ours.best_cost,
        comm_cost(g, &ours.best_partition, w).expect("scheduled partition is valid")
    );
    Ok(ComparisonReport {
        speedup_vs_mean_random: mean / ours.best_cost.total,
        scheduled: ours.best_cost,
        scheduled_partition: ours.best_partition,
        random_stats,
        random_totals,
        kl_total,
    })
}
