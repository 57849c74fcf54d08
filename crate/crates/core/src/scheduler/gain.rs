//! Surrogate edge weights and the swap gain functions built on them.
//!
//! Gains follow a "before minus after" convention: positive means the
//! surrogate predicts the swap helps.

use crate::costmodel::Partition;
use crate::matrix::SquareMatrix;
use crate::netmodel::{CommGraph, DeviceId};
use crate::workload::WorkloadSpec;
use crate::{Error, Result};

/// Scalar weight per device pair used by the local searches in place of
/// the full two-level cost: `lat + 8·(c_pp + c_dp)/bw`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateWeights {
    w: SquareMatrix,
    noise: f64,
}

impl SurrogateWeights {
    pub fn new(g: &CommGraph, wl: &WorkloadSpec) -> Self {
        let payload = wl.c_pp + wl.c_dp;
        let w = SquareMatrix::from_fn(g.n(), |i, j| {
            if i == j {
                0.0
            } else {
                g.transfer_time(DeviceId(i), DeviceId(j), payload)
            }
        });
        let max = (0..g.n())
            .flat_map(|i| w.row(i).iter().copied())
            .fold(0.0, f64::max);
        SurrogateWeights {
            w,
            noise: max * 1e-12,
        }
    }

    /// Gains at or below this are rounding noise (means over groups are not
    /// exact) and count as zero.
    pub fn noise_floor(&self) -> f64 {
        self.noise
    }

    #[inline]
    pub fn get(&self, a: DeviceId, b: DeviceId) -> f64 {
        self.w.get(a.0, b.0)
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.w
    }

    fn sum_to(&self, d: DeviceId, group: &[DeviceId]) -> f64 {
        group.iter().map(|&o| self.get(d, o)).sum()
    }
}

/// A swap of `d1` (group `j`) with `d1p` (group `j2`), where `d2` and `d2p`
/// are the fast partners the two movers leave behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OursCandidate {
    pub d1: DeviceId,
    pub d2: DeviceId,
    pub d1p: DeviceId,
    pub d2p: DeviceId,
}

impl OursCandidate {
    /// The four swaps across the fast edges `a1-a2` (group `j`) and
    /// `b1-b2` (group `j2`), in a fixed order.
    pub fn four(a: (DeviceId, DeviceId), b: (DeviceId, DeviceId)) -> [OursCandidate; 4] {
        let c = |d1, d2, d1p, d2p| OursCandidate { d1, d2, d1p, d2p };
        [
            c(a.0, a.1, b.0, b.1),
            c(a.0, a.1, b.1, b.0),
            c(a.1, a.0, b.0, b.1),
            c(a.1, a.0, b.1, b.0),
        ]
    }
}

/// Each mover's mean weight to the group it joins, minus the weight of the
/// fast link it leaves behind (which the pipeline matching is then expected
/// to use).
pub(crate) fn ours_gain(
    sw: &SurrogateWeights,
    groups: &[Vec<DeviceId>],
    j: usize,
    j2: usize,
    c: &OursCandidate,
) -> f64 {
    let (gj, gj2) = (&groups[j], &groups[j2]);
    sw.sum_to(c.d1, gj2) / gj2.len() as f64 - sw.get(c.d1, c.d2)
        + sw.sum_to(c.d1p, gj) / gj.len() as f64
        - sw.get(c.d1p, c.d2p)
}

pub fn gain_ours(
    sw: &SurrogateWeights,
    p: &Partition,
    j: usize,
    j2: usize,
    cand: &OursCandidate,
) -> Result<f64> {
    let groups = p.groups();
    for idx in [j, j2] {
        if idx >= groups.len() {
            return Err(Error::Partition(format!("group index {idx} out of range")));
        }
    }
    if j == j2 {
        return Err(Error::Partition("swap needs two distinct groups".into()));
    }
    let member = |d: DeviceId, g: usize| -> Result<()> {
        if groups[g].contains(&d) {
            Ok(())
        } else {
            Err(Error::Partition(format!("device {d} is not in group {g}")))
        }
    };
    member(cand.d1, j)?;
    member(cand.d2, j)?;
    member(cand.d1p, j2)?;
    member(cand.d2p, j2)?;
    if cand.d1 == cand.d2 || cand.d1p == cand.d2p {
        return Err(Error::Partition(
            "fast partner must differ from the mover".into(),
        ));
    }
    Ok(ours_gain(sw, groups, j, j2, cand))
}

/// Classical Kernighan-Lin gain of swapping `d` (group `j`) with `d2`
/// (group `j2`): the drop in cut weight between the two groups.
pub(crate) fn kl_gain(
    sw: &SurrogateWeights,
    groups: &[Vec<DeviceId>],
    j: usize,
    j2: usize,
    d: DeviceId,
    d2: DeviceId,
) -> f64 {
    let (gj, gj2) = (&groups[j], &groups[j2]);
    // the zero diagonal drops each device from its own group's sum
    sw.sum_to(d, gj2) - sw.sum_to(d, gj) + sw.sum_to(d2, gj)
        - sw.sum_to(d2, gj2)
        - 2.0 * sw.get(d, d2)
}

pub fn gain_kl(sw: &SurrogateWeights, p: &Partition, d: DeviceId, d2: DeviceId) -> Result<f64> {
    let find = |x: DeviceId| {
        p.groups()
            .iter()
            .position(|g| g.contains(&x))
            .ok_or(Error::DeviceOutOfRange(x.0, p.n()))
    };
    let (j, j2) = (find(d)?, find(d2)?);
    if j == j2 {
        return Err(Error::SameGroup(d.0, d2.0));
    }
    Ok(kl_gain(sw, p.groups(), j, j2, d, d2))
}
