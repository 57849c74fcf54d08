//! Fixtures and brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use geosched::costmodel::Partition;
use geosched::netmodel::{
    generate_scenario, symmetrize, CommGraph, NetworkProfile, ScenarioCase, ScenarioSpec,
};
use geosched::rng::{self, SeededRng};
use geosched::{DeviceId, SquareMatrix, WorkloadSpec};
use rand::seq::SliceRandom;
use rand::Rng;

/// Four devices; 0-1 and 2-3 are fast (1 ms, 10 Gbps), every other pair is
/// slow (50 ms, 1 Gbps).
pub fn g4_profile() -> NetworkProfile {
    let fast = |i: usize, j: usize| i / 2 == j / 2 && i != j;
    let delay = SquareMatrix::from_fn(4, |i, j| match (i == j, fast(i, j)) {
        (true, _) => 0.0,
        (_, true) => 0.001,
        _ => 0.05,
    });
    let bw = SquareMatrix::from_fn(4, |i, j| if fast(i, j) { 10e9 } else { 1e9 });
    NetworkProfile::new(delay, bw, None).unwrap()
}

pub fn g4_workload() -> WorkloadSpec {
    WorkloadSpec::new(2, 2, 125_000_000.0, 500_000_000.0).unwrap()
}

pub fn g4() -> (CommGraph, WorkloadSpec) {
    (symmetrize(&g4_profile()), g4_workload())
}

/// GPT3-XL-like volumes on an 8 x 8 grid: a 2048 x 2048 activation block
/// per micro-batch and three transformer layers of parameters per stage,
/// both in fp16.
pub fn pinned_workload() -> WorkloadSpec {
    WorkloadSpec::new(8, 8, 1_073_741_824.0, 301_989_888.0).unwrap()
}

pub fn case_profile(case: u8, seed: u64) -> NetworkProfile {
    let case = ScenarioCase::from_number(case).unwrap();
    generate_scenario(&ScenarioSpec::preset(case, seed).unwrap()).unwrap()
}

/// Symmetric profile with delays in [1, 100) ms and bandwidths in
/// [0.5, 10) Gbps.
pub fn random_profile(rng: &mut SeededRng, n: usize) -> NetworkProfile {
    let mut delay = SquareMatrix::zeros(n);
    let mut bw = SquareMatrix::filled(n, f64::INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let d = rng.gen_range(0.001..0.1);
            let b = rng.gen_range(0.5e9..10e9);
            delay.set(i, j, d);
            delay.set(j, i, d);
            bw.set(i, j, b);
            bw.set(j, i, b);
        }
    }
    NetworkProfile::new(delay, bw, None).unwrap()
}

pub fn random_partition(rng: &mut SeededRng, n: usize, d_dp: usize) -> Partition {
    let mut order: Vec<DeviceId> = (0..n).map(DeviceId).collect();
    order.shuffle(rng);
    Partition::from_order(&order, d_dp).unwrap()
}

pub fn seeded(seed: u64) -> SeededRng {
    rng::seeded(seed)
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Calls `f` on every permutation of `0..k` in lexicographic order.
pub fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], f: &mut dyn FnMut(&[usize])) {
        if cur.len() == used.len() {
            f(cur);
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, f);
                cur.pop();
                used[v] = false;
            }
        }
    }
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut f);
}

/// Oracle: the lexicographically first permutation with the smallest
/// maximum entry, and that maximum.
pub fn brute_bottleneck(m: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::INFINITY);
    for_each_permutation(m.len(), |p| {
        let b = p
            .iter()
            .enumerate()
            .map(|(r, &c)| m[r][c])
            .fold(0.0, f64::max);
        if b < best.1 {
            best = (p.to_vec(), b);
        }
    });
    best
}

/// Oracle: the smallest left-to-right path sum over all node orders.
pub fn brute_path_total(w: &SquareMatrix) -> f64 {
    let mut best = f64::INFINITY;
    for_each_permutation(w.n(), |p| {
        if p.len() >= 2 && p[p.len() - 1] < p[0] {
            return;
        }
        let t: f64 = p.windows(2).map(|e| w.get(e[0], e[1])).sum();
        best = best.min(t);
    });
    best
}

pub fn random_symmetric(rng: &mut SeededRng, k: usize, integer: bool) -> SquareMatrix {
    let mut w = SquareMatrix::zeros(k);
    for i in 0..k {
        for j in i + 1..k {
            let v = if integer {
                rng.gen_range(0..6) as f64
            } else {
                rng.gen_range(0.0..100.0)
            };
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    w
}

/// Oracle: total surrogate weight between two groups.
pub fn cut(w: &SquareMatrix, a: &[DeviceId], b: &[DeviceId]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| w.get(x.0, y.0)))
        .sum()
}

/// Drops `manifest.timing` from a JSON document so two runs can be
/// compared byte for byte.
pub fn strip_timing(json: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(json).unwrap();
    if let Some(m) = v.get_mut("manifest").and_then(|m| m.as_object_mut()) {
        m.remove("timing");
    }
    serde_json::to_string_pretty(&v).unwrap()
}
