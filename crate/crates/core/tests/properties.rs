mod common;

use common::*;
use geosched::combinatorics::{bottleneck_perfect_matching, open_loop_tsp, CostMatrix};
use geosched::costmodel::{comm_cost, enumerate_partitions, Partition};
use geosched::evaluation::{evaluate_assignment, materialize, validate_assignment, Assignment};
use geosched::netmodel::symmetrize;
use geosched::scheduler::{
    crossover, evolve, gain_kl, local_search, LocalSearchKind, ScheduleConfig, SurrogateWeights,
};
use geosched::{DeviceId, NetworkProfile, WorkloadSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..5, 1usize..5)
}

fn is_partition_of(p: &Partition, n: usize, d_pp: usize, d_dp: usize) -> bool {
    let mut all: Vec<usize> = p.to_indices().concat();
    all.sort_unstable();
    p.d_pp() == d_pp
        && p.groups().iter().all(|g| g.len() == d_dp)
        && all == (0..n).collect::<Vec<_>>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn materialized_layouts_are_valid_and_consistent(seed in any::<u64>(), (d_pp, d_dp) in shape()) {
        let n = d_pp * d_dp;
        let mut rng = seeded(seed);
        let g = symmetrize(&random_profile(&mut rng, n));
        let w = WorkloadSpec::new(d_pp, d_dp, 2e8, 6e8).unwrap();
        let p = random_partition(&mut rng, n, d_dp);
        let a = materialize(&g, &p, &w).unwrap();
        validate_assignment(&a, n).unwrap();
        // column j holds group order[j]
        for (j, &grp) in a.order.iter().enumerate() {
            let mut col = a.column(j);
            col.sort_unstable();
            prop_assert_eq!(&col, &p.groups()[grp]);
        }
        prop_assert_eq!(
            evaluate_assignment(&g, &a, &w).unwrap().total,
            comm_cost(&g, &p, &w).unwrap().total
        );
    }

    #[test]
    fn row_permutation_leaves_layout_cost_unchanged(seed in any::<u64>(), (d_pp, d_dp) in shape()) {
        let n = d_pp * d_dp;
        let mut rng = seeded(seed);
        let g = symmetrize(&random_profile(&mut rng, n));
        let w = WorkloadSpec::new(d_pp, d_dp, 2e8, 6e8).unwrap();
        let mut grid = materialize(&g, &random_partition(&mut rng, n, d_dp), &w).unwrap().grid;
        let before = evaluate_assignment(&g, &Assignment::from_grid(grid.clone()), &w).unwrap();
        grid.shuffle(&mut rng);
        let after = evaluate_assignment(&g, &Assignment::from_grid(grid), &w).unwrap();
        prop_assert_eq!(before.total, after.total);
    }

    #[test]
    fn crossover_keeps_balance(seed in any::<u64>(), (d_pp, d_dp) in shape()) {
        let n = d_pp * d_dp;
        let mut rng = seeded(seed);
        let a = random_partition(&mut rng, n, d_dp);
        let b = random_partition(&mut rng, n, d_dp);
        let child = crossover(&a, &b, &mut rng).unwrap();
        prop_assert!(is_partition_of(&child, n, d_pp, d_dp));
    }

    #[test]
    fn local_search_never_worsens(seed in any::<u64>(), (d_pp, d_dp) in (2usize..5, 2usize..5)) {
        let n = d_pp * d_dp;
        let mut rng = seeded(seed);
        let g = symmetrize(&random_profile(&mut rng, n));
        let w = WorkloadSpec::new(d_pp, d_dp, 2e8, 6e8).unwrap();
        let p = random_partition(&mut rng, n, d_dp);
        let start = comm_cost(&g, &p, &w).unwrap().total;
        for kind in [LocalSearchKind::Ours, LocalSearchKind::Kl, LocalSearchKind::None] {
            let out = local_search(&g, &w, &p, kind, 8).unwrap();
            prop_assert!(out.cost.total <= start);
            prop_assert!(is_partition_of(&out.partition, n, d_pp, d_dp));
            prop_assert_eq!(out.cost.total, comm_cost(&g, &out.partition, &w).unwrap().total);
        }
    }

    #[test]
    fn kl_gain_is_the_cut_drop(seed in any::<u64>(), (d_pp, d_dp) in (2usize..5, 1usize..5)) {
        let n = d_pp * d_dp;
        let mut rng = seeded(seed);
        let g = symmetrize(&random_profile(&mut rng, n));
        let w = WorkloadSpec::new(d_pp, d_dp, 2e8, 6e8).unwrap();
        let sw = SurrogateWeights::new(&g, &w);
        let p = random_partition(&mut rng, n, d_dp);
        let (x, y) = (p.groups()[0][0], p.groups()[1][d_dp - 1]);
        let before = cut(sw.matrix(), &p.groups()[0], &p.groups()[1]);
        let swap = |grp: &[DeviceId]| -> Vec<DeviceId> {
            grp.iter().map(|&z| if z == x { y } else if z == y { x } else { z }).collect()
        };
        let after = cut(sw.matrix(), &swap(&p.groups()[0]), &swap(&p.groups()[1]));
        prop_assert!(close(gain_kl(&sw, &p, x, y).unwrap() + after, before, 1e-9));
    }

    #[test]
    fn slower_link_never_lowers_cost(seed in any::<u64>(), (d_pp, d_dp) in (1usize..4, 1usize..4), factor in 1.0f64..20.0) {
        let n = d_pp * d_dp;
        prop_assume!(n >= 2);
        let mut rng = seeded(seed);
        let base = random_profile(&mut rng, n);
        let w = WorkloadSpec::new(d_pp, d_dp, 2e8, 6e8).unwrap();
        let p = random_partition(&mut rng, n, d_dp);
        let (i, j) = (seed as usize % n, (seed as usize / n) % n);
        prop_assume!(i != j);
        let mut delay = base.delay().clone();
        let mut bw = base.bandwidth().clone();
        delay.set(i, j, delay.get(i, j) * factor);
        bw.set(j, i, bw.get(j, i) / factor);
        let worse = NetworkProfile::new(delay, bw, None).unwrap();
        prop_assert!(
            comm_cost(&symmetrize(&worse), &p, &w).unwrap().total
                >= comm_cost(&symmetrize(&base), &p, &w).unwrap().total
        );
    }

    #[test]
    fn matching_bottleneck_is_an_entry_of_the_matching(k in 1usize..7, vals in proptest::collection::vec(0.0f64..10.0, 49)) {
        let rows: Vec<Vec<f64>> = (0..k).map(|r| vals[r * 7..r * 7 + k].to_vec()).collect();
        let m = bottleneck_perfect_matching(&CostMatrix::from_rows(&rows).unwrap());
        let mut cols = m.pairs.clone();
        cols.sort_unstable();
        prop_assert_eq!(cols, (0..k).collect::<Vec<_>>());
        let max = m.pairs.iter().enumerate().map(|(r, &c)| rows[r][c]).fold(0.0, f64::max);
        prop_assert_eq!(max, m.bottleneck);
        prop_assert_eq!(m.bottleneck, brute_bottleneck(&rows).1);
    }

    #[test]
    fn tsp_total_is_the_sum_along_its_order(seed in any::<u64>(), k in 1usize..9) {
        let w = random_symmetric(&mut seeded(seed), k, false);
        let r = open_loop_tsp(&w).unwrap();
        let along: f64 = r.order.windows(2).map(|e| w.get(e[0], e[1])).sum();
        prop_assert_eq!(r.total, along);
        prop_assert_eq!(r.total, brute_path_total(&w));
    }
}

#[test]
fn evolve_traces_never_rise_and_match_the_reported_best() {
    let w = WorkloadSpec::new(3, 3, 2e8, 6e8).unwrap();
    for seed in 0..5 {
        let g = symmetrize(&random_profile(&mut seeded(seed), 9));
        let cfg = ScheduleConfig {
            pop_size: 6,
            generations: 40,
            seed,
            ..ScheduleConfig::default()
        };
        let r = evolve(&g, &w, &cfg).unwrap();
        assert!(r
            .trace
            .windows(2)
            .all(|t| t[1].best_total_s <= t[0].best_total_s));
        assert!(r.trace.iter().all(|t| t.best_total_s <= t.mean_total_s));
        assert_eq!(r.trace.last().unwrap().best_total_s, r.best_cost.total);
    }
}

#[test]
fn evolve_reports_the_true_cost_of_a_real_partition() {
    let w = WorkloadSpec::new(2, 4, 2e8, 6e8).unwrap();
    let g = symmetrize(&random_profile(&mut seeded(77), 8));
    let all: Vec<f64> = enumerate_partitions(2, 4)
        .iter()
        .map(|p| comm_cost(&g, p, &w).unwrap().total)
        .collect();
    let min = all.iter().copied().fold(f64::INFINITY, f64::min);
    for seed in 0..5 {
        let cfg = ScheduleConfig {
            pop_size: 8,
            generations: 40,
            seed,
            ..Default::default()
        };
        let r = evolve(&g, &w, &cfg).unwrap();
        assert!(all.contains(&r.best_cost.total));
        assert!(r.best_cost.total >= min);
        assert_eq!(r.best_cost, comm_cost(&g, &r.best_partition, &w).unwrap());
    }
}

#[test]
fn joint_volume_bandwidth_scaling_keeps_the_search_path() {
    let mut rng = seeded(31);
    let base = random_profile(&mut rng, 12);
    let w = WorkloadSpec::new(3, 4, 2e8, 6e8).unwrap();
    let cfg = ScheduleConfig {
        pop_size: 8,
        generations: 30,
        seed: 5,
        ..Default::default()
    };
    let r = evolve(&symmetrize(&base), &w, &cfg).unwrap();
    for exp in [-3, 1, 4] {
        // powers of two keep lat + 8c/bw bit-identical
        let lambda = 2f64.powi(exp);
        let scaled = NetworkProfile::new(
            base.delay().clone(),
            base.bandwidth().map(|b| b * lambda),
            None,
        )
        .unwrap();
        let ws = WorkloadSpec::new(3, 4, w.c_pp * lambda, w.c_dp * lambda).unwrap();
        let s = evolve(&symmetrize(&scaled), &ws, &cfg).unwrap();
        assert_eq!(s.best_partition, r.best_partition);
        assert_eq!(s.trace, r.trace);
    }
}
