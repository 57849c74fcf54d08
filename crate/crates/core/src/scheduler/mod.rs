//! Hybrid genetic search over balanced partitions.
//!
//! Each generation picks two parents uniformly, crosses them over, refines
//! the offspring with a local search and lets it replace the population's
//! worst member when its true cost is strictly lower.

mod gain;
mod local_search;

pub use gain::{gain_kl, gain_ours, OursCandidate, SurrogateWeights};
pub use local_search::{local_search, LocalSearchKind, LocalSearchOutcome};

use std::fmt::Write as _;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::TspSolver;
use crate::costmodel::{CostBreakdown, Partition};
use crate::netmodel::{CommGraph, DeviceId};
use crate::rng::{self, SeededRng};
use crate::workload::{validate_workload, WorkloadSpec};
use crate::{Error, Result};
use local_search::{refine, SearchContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub local_search: LocalSearchKind,
    pub max_passes: usize,
    pub seed: u64,
    /// Stop after this many generations without a new best.
    pub patience: Option<usize>,
    #[serde(default)]
    pub tsp: TspSolver,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            pop_size: 64,
            generations: 1000,
            local_search: LocalSearchKind::Ours,
            max_passes: 8,
            seed: 0,
            patience: None,
            tsp: TspSolver::Exact,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::Config(format!(
                "pop_size must be >= 2, got {}",
                self.pop_size
            )));
        }
        if self.generations < 1 {
            return Err(Error::Config("generations must be >= 1".into()));
        }
        if self.max_passes < 1 {
            return Err(Error::Config("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub generation: usize,
    pub best_total_s: f64,
    pub mean_total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub best_partition: Partition,
    pub best_cost: CostBreakdown,
    /// Generation 0 is the initial population.
    pub trace: Vec<TracePoint>,
    pub evaluations: u64,
    pub seed: u64,
}

impl ScheduleResult {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("generation,best_cost_s,mean_cost_s\n");
    for t in trace {
        writeln!(
            out,
            "{},{},{}",
            t.generation, t.best_total_s, t.mean_total_s
        )
        .expect("writing to a String");
    }
    out
}

fn random_partition(rng: &mut SeededRng, n: usize, d_dp: usize) -> Result<Partition> {
    let mut order: Vec<DeviceId> = (0..n).map(DeviceId).collect();
    order.shuffle(rng);
    Partition::from_order(&order, d_dp)
}

fn check_problem(g: &CommGraph, w: &WorkloadSpec, cfg: &ScheduleConfig) -> Result<()> {
    cfg.validate()?;
    validate_workload(w, g.n())
}

fn population(
    rng: &mut SeededRng,
    g: &CommGraph,
    w: &WorkloadSpec,
    size: usize,
) -> Result<Vec<Partition>> {
    (0..size)
        .map(|_| random_partition(rng, g.n(), w.d_dp))
        .collect()
}

/// `cfg.pop_size` seeded shuffles of the devices, each cut into `d_pp`
/// consecutive groups of `d_dp`.
pub fn init_population(
    g: &CommGraph,
    w: &WorkloadSpec,
    cfg: &ScheduleConfig,
) -> Result<Vec<Partition>> {
    check_problem(g, w, cfg)?;
    population(&mut rng::seeded(cfg.seed), g, w, cfg.pop_size)
}

/// Balance-preserving crossover: copies `p1`, then pulls a random nonempty
/// subset of the devices that `p2` has in group `j` (and `p1` does not) into
/// group `j`, evicting a random original member of `j` for each newcomer
/// back to the newcomer's old group.
pub fn crossover(p1: &Partition, p2: &Partition, rng: &mut SeededRng) -> Result<Partition> {
    if (p1.d_pp(), p1.d_dp()) != (p2.d_pp(), p2.d_dp()) {
        return Err(Error::Partition(format!(
            "parents differ in shape: {}x{} vs {}x{}",
            p1.d_pp(),
            p1.d_dp(),
            p2.d_pp(),
            p2.d_dp()
        )));
    }
    let j = rng.gen_range(0..p1.d_pp());
    let target = &p1.groups()[j];
    let donors: Vec<DeviceId> = p2.groups()[j]
        .iter()
        .copied()
        .filter(|d| !target.contains(d))
        .collect();
    if donors.is_empty() {
        return Ok(p1.clone());
    }
    let count = rng.gen_range(1..=donors.len());
    let mut incomers = donors.into_iter().choose_multiple(rng, count);
    incomers.sort_unstable();
    crossover_into(p1, j, &incomers, rng)
}

/// The deterministic core of [`crossover`] with the group and the incoming
/// devices fixed; only the evictions are drawn from `rng`.
pub fn crossover_into(
    p1: &Partition,
    j: usize,
    incomers: &[DeviceId],
    rng: &mut SeededRng,
) -> Result<Partition> {
    let mut groups = p1.groups().to_vec();
    if j >= groups.len() {
        return Err(Error::Partition(format!("group index {j} out of range")));
    }
    let mut evictable: Vec<DeviceId> = groups[j]
        .iter()
        .copied()
        .filter(|d| !incomers.contains(d))
        .collect();
    for &x in incomers {
        let src = groups
            .iter()
            .position(|g| g.contains(&x))
            .ok_or(Error::DeviceOutOfRange(x.0, p1.n()))?;
        if src == j {
            return Err(Error::Partition(format!(
                "device {x} is already in group {j}"
            )));
        }
        if evictable.is_empty() {
            return Err(Error::Partition("more incomers than group slots".into()));
        }
        let out = evictable.remove(rng.gen_range(0..evictable.len()));
        let xi = groups[src].iter().position(|&d| d == x).expect("x in src");
        groups[src][xi] = out;
        let oi = groups[j].iter().position(|&d| d == out).expect("out in j");
        groups[j][oi] = x;
    }
    Partition::new(groups)
}

struct Member {
    partition: Partition,
    cost: CostBreakdown,
}

fn worst_index(pop: &[Member]) -> usize {
    let mut worst = 0;
    for (i, m) in pop.iter().enumerate() {
        if m.cost.total > pop[worst].cost.total {
            worst = i;
        }
    }
    worst
}

fn best_index(pop: &[Member]) -> usize {
    let mut best = 0;
    for (i, m) in pop.iter().enumerate() {
        if m.cost.total < pop[best].cost.total {
            best = i;
        }
    }
    best
}

fn trace_point(generation: usize, pop: &[Member]) -> TracePoint {
    let sum: f64 = pop.iter().map(|m| m.cost.total).sum();
    TracePoint {
        generation,
        best_total_s: pop[best_index(pop)].cost.total,
        mean_total_s: sum / pop.len() as f64,
    }
}

pub fn evolve(g: &CommGraph, w: &WorkloadSpec, cfg: &ScheduleConfig) -> Result<ScheduleResult> {
    check_problem(g, w, cfg)?;
    let ctx = SearchContext::new(g, w, cfg.tsp);
    let mut rng = rng::seeded(cfg.seed);

    let initial = population(&mut rng, g, w, cfg.pop_size)?;
    // evaluated in parallel, collected in population order
    let costs: Vec<CostBreakdown> = initial
        .par_iter()
        .map(|p| ctx.cost(p))
        .collect::<Result<_>>()?;
    let mut evaluations = costs.len() as u64;
    let mut pop: Vec<Member> = initial
        .into_iter()
        .zip(costs)
        .map(|(partition, cost)| Member { partition, cost })
        .collect();

    let mut trace = vec![trace_point(0, &pop)];
    let mut stale = 0;
    for generation in 1..=cfg.generations {
        let a = rng.gen_range(0..pop.len());
        let mut b = rng.gen_range(0..pop.len() - 1);
        if b >= a {
            b += 1;
        }
        let child = crossover(&pop[a].partition, &pop[b].partition, &mut rng)?;
        let child_cost = ctx.cost(&child)?;
        let refined = refine(&ctx, &child, child_cost, cfg.local_search, cfg.max_passes)?;
        evaluations += refined.evaluations;

        let worst = worst_index(&pop);
        if refined.cost.total < pop[worst].cost.total {
            pop[worst] = Member {
                partition: refined.partition,
                cost: refined.cost,
            };
        }

        let point = trace_point(generation, &pop);
        if point.best_total_s < trace.last().expect("trace is nonempty").best_total_s {
            stale = 0;
        } else {
            stale += 1;
        }
        trace.push(point);
        if cfg.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }

    let best = pop.swap_remove(best_index(&pop));
    Ok(ScheduleResult {
        best_partition: best.partition,
        best_cost: best.cost,
        trace,
        evaluations,
        seed: cfg.seed,
    })
}
