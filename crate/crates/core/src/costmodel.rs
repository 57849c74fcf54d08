//! Two-level communication cost of a balanced partition.
//!
//! The partition fixes which devices form each data-parallel group (one
//! group per pipeline stage). Given the partition:
//!
//! - the data-parallel cost is that of the slowest group, where a group's
//!   cost is the slowest member's shard exchange with every other member
//!   (sharded parameter server, send + receive);
//! - the pipeline cost first prices every pair of groups by the best
//!   bottleneck matching between their members, then orders the groups by
//!   a minimum open-loop tour over those prices.
//!
//! The total is the plain sum of the two; compute/communication overlap is
//! not modeled.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{
    bottleneck_perfect_matching, solve_open_loop_tsp, CostMatrix, MatchingResult, PathResult,
    TspSolver,
};
use crate::matrix::SquareMatrix;
use crate::netmodel::{CommGraph, DeviceId};
use crate::workload::WorkloadSpec;
use crate::{Error, Result};

/// Devices split into `d_pp` disjoint groups of `d_dp`.
///
/// Always held in canonical form: members ascending within each group,
/// groups ordered by their smallest member. Ordering on partitions is the
/// lexicographic order of that encoding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<DeviceId>>", into = "Vec<Vec<DeviceId>>")]
pub struct Partition {
    groups: Vec<Vec<DeviceId>>,
}

impl Partition {
    pub fn new(mut groups: Vec<Vec<DeviceId>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Partition("no groups".into()));
        }
        let size = groups[0].len();
        if size == 0 {
            return Err(Error::Partition("empty group".into()));
        }
        if let Some((j, g)) = groups.iter().enumerate().find(|(_, g)| g.len() != size) {
            return Err(Error::Partition(format!(
                "group {j} has {} devices, group 0 has {size}",
                g.len()
            )));
        }
        let n = groups.len() * size;
        let mut seen = vec![false; n];
        for g in &groups {
            for &d in g {
                if d.0 >= n {
                    return Err(Error::Partition(format!(
                        "device {d} out of range for {n} devices"
                    )));
                }
                if std::mem::replace(&mut seen[d.0], true) {
                    return Err(Error::Partition(format!("device {d} appears twice")));
                }
            }
        }
        for g in groups.iter_mut() {
            g.sort_unstable();
        }
        groups.sort_unstable();
        Ok(Partition { groups })
    }

    pub fn from_indices(groups: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(
            groups
                .into_iter()
                .map(|g| g.into_iter().map(DeviceId).collect())
                .collect(),
        )
    }

    /// Consecutive chunks of `order`; `order` must be a permutation.
    pub fn from_order(order: &[DeviceId], d_dp: usize) -> Result<Self> {
        if d_dp == 0 || !order.len().is_multiple_of(d_dp) {
            return Err(Error::Partition(format!(
                "{} devices do not split into groups of {d_dp}",
                order.len()
            )));
        }
        Self::new(order.chunks(d_dp).map(<[DeviceId]>::to_vec).collect())
    }

    pub fn groups(&self) -> &[Vec<DeviceId>] {
        &self.groups
    }

    pub fn d_pp(&self) -> usize {
        self.groups.len()
    }

    pub fn d_dp(&self) -> usize {
        self.groups[0].len()
    }

    pub fn n(&self) -> usize {
        self.d_pp() * self.d_dp()
    }

    pub fn to_indices(&self) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|d| d.0).collect())
            .collect()
    }

    /// Checks that the shape agrees with the workload and the graph.
    pub fn check_shape(&self, g: &CommGraph, w: &WorkloadSpec) -> Result<()> {
        if self.d_pp() != w.d_pp || self.d_dp() != w.d_dp {
            return Err(Error::Partition(format!(
                "{} groups of {} do not match d_pp = {}, d_dp = {}",
                self.d_pp(),
                self.d_dp(),
                w.d_pp,
                w.d_dp
            )));
        }
        if self.n() != g.n() {
            return Err(Error::Partition(format!(
                "partition covers {} devices, graph has {}",
                self.n(),
                g.n()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<DeviceId>>> for Partition {
    type Error = Error;

    fn try_from(groups: Vec<Vec<DeviceId>>) -> Result<Self> {
        Partition::new(groups)
    }
}

impl From<Partition> for Vec<Vec<DeviceId>> {
    fn from(p: Partition) -> Self {
        p.groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub datap: f64,
    pub pipelinep: f64,
    pub total: f64,
    pub per_group_datap: Vec<f64>,
    pub pipeline_order: PathResult,
}

/// Complete graph over the groups of a partition, weighted by the best
/// bottleneck matching between each pair of groups.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsenedGraph {
    edge_cost: SquareMatrix,
    // upper triangle, row-major: (0,1), (0,2), .., (1,2), ..
    matchings: Vec<MatchingResult>,
}

impl CoarsenedGraph {
    pub fn k(&self) -> usize {
        self.edge_cost.n()
    }

    pub fn edge_cost(&self) -> &SquareMatrix {
        &self.edge_cost
    }

    fn pair_index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < b);
        let k = self.k();
        a * (2 * k - a - 1) / 2 + (b - a - 1)
    }

    /// The stored optimal matching between groups `a < b`, as member ranks
    /// of `a` mapped to member ranks of `b`.
    pub fn matching(&self, a: usize, b: usize) -> &MatchingResult {
        &self.matchings[self.pair_index(a, b)]
    }

    /// Rank mapping from group `from` to group `to` in either direction.
    pub fn rank_map(&self, from: usize, to: usize) -> Vec<usize> {
        if from < to {
            self.matching(from, to).pairs.clone()
        } else {
            let pairs = &self.matching(to, from).pairs;
            let mut inv = vec![0; pairs.len()];
            for (r, &c) in pairs.iter().enumerate() {
                inv[c] = r;
            }
            inv
        }
    }
}

/// Round-trip activation exchange between two devices of adjacent stages.
#[inline]
pub fn pipeline_link_cost(g: &CommGraph, a: DeviceId, b: DeviceId, w: &WorkloadSpec) -> f64 {
    2.0 * g.transfer_time(a, b, w.c_pp)
}

/// Cost of one data-parallel group: the slowest member's exchange of one
/// `c_dp / d_dp` shard with every other member, twice (scatter + gather).
pub fn datap_cost_group(g: &CommGraph, group: &[DeviceId], w: &WorkloadSpec) -> f64 {
    // summation order is fixed so that any ordering of `group` gives
    // bit-identical results
    let mut members = group.to_vec();
    members.sort_unstable();
    let shard = w.c_dp / w.d_dp as f64;
    members
        .iter()
        .map(|&d| {
            members
                .iter()
                .filter(|&&o| o != d)
                .map(|&o| 2.0 * g.transfer_time(d, o, shard))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

pub fn datap_cost(g: &CommGraph, p: &Partition, w: &WorkloadSpec) -> (f64, Vec<f64>) {
    let per_group: Vec<f64> = p
        .groups()
        .iter()
        .map(|grp| datap_cost_group(g, grp, w))
        .collect();
    let worst = per_group.iter().copied().fold(0.0, f64::max);
    (worst, per_group)
}

pub fn coarsen(g: &CommGraph, p: &Partition, w: &WorkloadSpec) -> CoarsenedGraph {
    let k = p.d_pp();
    let groups = p.groups();
    let mut edge_cost = SquareMatrix::zeros(k);
    let mut matchings = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let costs = SquareMatrix::from_fn(p.d_dp(), |r, c| {
                pipeline_link_cost(g, groups[a][r], groups[b][c], w)
            });
            let m = bottleneck_perfect_matching(
                &CostMatrix::new(costs).expect("link costs are finite and nonnegative"),
            );
            edge_cost.set(a, b, m.bottleneck);
            edge_cost.set(b, a, m.bottleneck);
            matchings.push(m);
        }
    }
    CoarsenedGraph {
        edge_cost,
        matchings,
    }
}

pub fn pipeline_cost(cg: &CoarsenedGraph) -> Result<PathResult> {
    pipeline_cost_with(cg, TspSolver::Exact)
}

pub fn pipeline_cost_with(cg: &CoarsenedGraph, solver: TspSolver) -> Result<PathResult> {
    solve_open_loop_tsp(cg.edge_cost(), solver)
}

pub fn comm_cost(g: &CommGraph, p: &Partition, w: &WorkloadSpec) -> Result<CostBreakdown> {
    comm_cost_with(g, p, w, TspSolver::Exact)
}

pub fn comm_cost_with(
    g: &CommGraph,
    p: &Partition,
    w: &WorkloadSpec,
    solver: TspSolver,
) -> Result<CostBreakdown> {
    p.check_shape(g, w)?;
    let (datap, per_group_datap) = datap_cost(g, p, w);
    let path = pipeline_cost_with(&coarsen(g, p, w), solver)?;
    Ok(CostBreakdown {
        datap,
        pipelinep: path.total,
        total: datap + path.total,
        per_group_datap,
        pipeline_order: path,
    })
}

pub const MAX_BRUTE_FORCE_DEVICES: usize = 8;

/// Every balanced partition of `0..d_pp·d_dp` into `d_pp` groups of
/// `d_dp`, in ascending canonical order.
pub fn enumerate_partitions(d_pp: usize, d_dp: usize) -> Vec<Partition> {
    fn rec(
        d_dp: usize,
        unassigned: &mut Vec<usize>,
        current: &mut Vec<Vec<usize>>,
        out: &mut Vec<Partition>,
    ) {
        if unassigned.is_empty() {
            out.push(Partition::from_indices(current.clone()).expect("balanced by construction"));
            return;
        }
        // the smallest free device anchors the next group
        let anchor = unassigned.remove(0);
        let rest = unassigned.clone();
        for combo in combinations(&rest, d_dp - 1) {
            let mut group = vec![anchor];
            group.extend(&combo);
            let taken: HashSet<usize> = combo.iter().copied().collect();
            let mut left: Vec<usize> = rest
                .iter()
                .copied()
                .filter(|d| !taken.contains(d))
                .collect();
            current.push(group);
            rec(d_dp, &mut left, current, out);
            current.pop();
        }
        unassigned.insert(0, anchor);
    }
    let mut out = Vec::new();
    if d_pp == 0 || d_dp == 0 {
        return out;
    }
    let mut all: Vec<usize> = (0..d_pp * d_dp).collect();
    rec(d_dp, &mut all, &mut Vec::new(), &mut out);
    out
}

fn combinations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![Vec::new()];
    }
    if items.len() < r {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut tail in combinations(&items[i + 1..], r - 1) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

/// Exhaustive minimum of the total cost over all balanced partitions; ties
/// go to the smallest canonical encoding.
pub fn brute_force_best(g: &CommGraph, w: &WorkloadSpec) -> Result<(Partition, CostBreakdown)> {
    let n = g.n();
    if n > MAX_BRUTE_FORCE_DEVICES {
        return Err(Error::TooManyDevices {
            got: n,
            max: MAX_BRUTE_FORCE_DEVICES,
        });
    }
    crate::workload::validate_workload(w, n)?;
    let mut best: Option<(Partition, CostBreakdown)> = None;
    for p in enumerate_partitions(w.d_pp, w.d_dp) {
        let cost = comm_cost(g, &p, w)?;
        if best.as_ref().is_none_or(|(_, b)| cost.total < b.total) {
            best = Some((p, cost));
        }
    }
    Ok(best.expect("at least one partition exists"))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::matrix::SquareMatrix;
    use crate::netmodel::{symmetrize, CommGraph, NetworkProfile};
    use crate::workload::WorkloadSpec;

    /// Four devices; 0-1 and 2-3 are fast (1 ms, 10 Gbps), every other
    /// pair is slow (50 ms, 1 Gbps).
    pub fn g4() -> (CommGraph, WorkloadSpec) {
        let fast = |i: usize, j: usize| (i / 2 == j / 2) && i != j;
        let delay = SquareMatrix::from_fn(4, |i, j| match (i == j, fast(i, j)) {
            (true, _) => 0.0,
            (_, true) => 0.001,
            _ => 0.05,
        });
        let bw = SquareMatrix::from_fn(4, |i, j| if fast(i, j) { 10e9 } else { 1e9 });
        let g = symmetrize(&NetworkProfile::new(delay, bw, None).unwrap());
        (
            g,
            WorkloadSpec::new(2, 2, 125_000_000.0, 500_000_000.0).unwrap(),
        )
    }

    pub fn homogeneous(n: usize, d_pp: usize, d_dp: usize) -> (CommGraph, WorkloadSpec) {
        let delay = SquareMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { 0.01 });
        let bw = SquareMatrix::filled(n, 5e9);
        let g = symmetrize(&NetworkProfile::new(delay, bw, None).unwrap());
        (g, WorkloadSpec::new(d_pp, d_dp, 1e8, 4e8).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::{g4, homogeneous};
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    fn part(groups: &[&[usize]]) -> Partition {
        Partition::from_indices(groups.iter().map(|g| g.to_vec()).collect()).unwrap()
    }

    #[test]
    fn partition_validation_and_canonical_form() {
        let p = part(&[&[3, 1], &[2, 0]]);
        assert_eq!(p.to_indices(), vec![vec![0, 2], vec![1, 3]]);
        assert!(Partition::from_indices(vec![vec![0, 1], vec![2]]).is_err());
        assert!(Partition::from_indices(vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::from_indices(vec![vec![0, 5], vec![1, 2]]).is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[[0,2],[1,3]]");
        assert_eq!(
            serde_json::from_str::<Partition>("[[3,1],[0,2]]").unwrap(),
            p
        );
        assert!(serde_json::from_str::<Partition>("[[0,0],[1,2]]").is_err());
    }

    #[test]
    fn datap_group_examples() {
        let (g, w) = g4();
        assert_eq!(datap_cost_group(&g, &[DeviceId(2)], &w), 0.0);
        assert!(close(
            datap_cost_group(&g, &[DeviceId(0), DeviceId(1)], &w),
            0.402
        ));
        assert!(close(
            datap_cost_group(&g, &[DeviceId(0), DeviceId(2)], &w),
            4.1
        ));
    }

    #[test]
    fn datap_partition_examples() {
        let (g, w) = g4();
        let (c, per) = datap_cost(&g, &part(&[&[0, 1], &[2, 3]]), &w);
        assert!(close(c, 0.402));
        assert_eq!(per.len(), 2);
        let (c, _) = datap_cost(&g, &part(&[&[0, 2], &[1, 3]]), &w);
        assert!(close(c, 4.1));
    }

    #[test]
    fn single_stage_has_no_pipeline_cost() {
        let (g, _) = g4();
        let w = WorkloadSpec::new(1, 4, 125e6, 500e6).unwrap();
        let p = part(&[&[0, 1, 2, 3]]);
        let c = comm_cost(&g, &p, &w).unwrap();
        assert_eq!(c.pipelinep, 0.0);
        assert_eq!(c.datap, datap_cost_group(&g, &p.groups()[0], &w));
        assert_eq!(c.total, c.datap);
    }

    #[test]
    fn coarsen_examples() {
        let (g, w) = g4();
        let cg = coarsen(&g, &part(&[&[0, 1], &[2, 3]]), &w);
        assert_eq!(cg.k(), 2);
        assert!(close(cg.edge_cost().get(0, 1), 2.1));
        assert_eq!(cg.matching(0, 1).pairs, vec![0, 1]);

        let cg = coarsen(&g, &part(&[&[0, 2], &[1, 3]]), &w);
        assert!(close(cg.edge_cost().get(0, 1), 0.202));
        // 0 -> 1 and 2 -> 3
        assert_eq!(cg.matching(0, 1).pairs, vec![0, 1]);
        assert_eq!(cg.edge_cost().get(0, 1), cg.matching(0, 1).bottleneck);
    }

    #[test]
    fn pipeline_cost_examples() {
        let (g, w) = g4();
        let cg = coarsen(&g, &part(&[&[0, 1], &[2, 3]]), &w);
        let path = pipeline_cost(&cg).unwrap();
        assert_eq!(path.order, vec![0, 1]);
        assert!(close(path.total, 2.1));
    }

    #[test]
    fn comm_cost_examples() {
        let (g, w) = g4();
        let a = comm_cost(&g, &part(&[&[0, 1], &[2, 3]]), &w).unwrap();
        assert!(close(a.datap, 0.402) && close(a.pipelinep, 2.1) && close(a.total, 2.502));
        let b = comm_cost(&g, &part(&[&[0, 2], &[1, 3]]), &w).unwrap();
        assert!(close(b.datap, 4.1) && close(b.pipelinep, 0.202) && close(b.total, 4.302));
        let c = comm_cost(&g, &part(&[&[0, 3], &[1, 2]]), &w).unwrap();
        assert!(close(c.total, 4.302));
    }

    #[test]
    fn comm_cost_rejects_shape_mismatch() {
        let (g, _) = g4();
        let w = WorkloadSpec::new(4, 1, 1.0, 1.0).unwrap();
        assert!(matches!(
            comm_cost(&g, &part(&[&[0, 1], &[2, 3]]), &w),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_partitions(2, 2).len(), 3);
        assert_eq!(enumerate_partitions(3, 2).len(), 15);
        assert_eq!(enumerate_partitions(2, 4).len(), 35);
        assert_eq!(enumerate_partitions(4, 2).len(), 105);
        assert_eq!(enumerate_partitions(2, 1).len(), 1);
        let all = enumerate_partitions(3, 2);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, all);
    }

    #[test]
    fn brute_force_examples() {
        let (g, w) = g4();
        let (p, c) = brute_force_best(&g, &w).unwrap();
        assert_eq!(p, part(&[&[0, 1], &[2, 3]]));
        assert!(close(c.total, 2.502));

        let (g, _) = homogeneous(2, 2, 1);
        let w = WorkloadSpec::new(2, 1, 1e8, 1e8).unwrap();
        assert_eq!(brute_force_best(&g, &w).unwrap().0, part(&[&[0], &[1]]));

        let (g, w) = homogeneous(4, 2, 2);
        assert_eq!(
            brute_force_best(&g, &w).unwrap().0,
            part(&[&[0, 1], &[2, 3]])
        );

        let (g, w) = homogeneous(9, 3, 3);
        assert!(matches!(
            brute_force_best(&g, &w),
            Err(Error::TooManyDevices { got: 9, max: 8 })
        ));
    }
}
