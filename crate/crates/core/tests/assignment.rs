mod common;

use common::{brute_force_min, permutations};
use proptest::prelude::*;
use swarmsim::assignment::{reconfigure, solve, solve_max_weight, CostMatrix};
use swarmsim::formation::{builtin_formation, builtin_formations};
use swarmsim::topology::LeaderDesignation;
use swarmsim::Vec3;

fn square(max_n: usize, values: impl Strategy<Value = f64> + Clone) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_n).prop_flat_map(move |n| prop::collection::vec(prop::collection::vec(values.clone(), n), n))
}

proptest! {
    #[test]
    fn km_matches_exhaustive_search(rows in square(7, 0.0..1000.0f64)) {
        let got = solve(&CostMatrix::from_rows(&rows).unwrap());
        let (best, _) = brute_force_min(&rows);
        prop_assert!(got.is_bijection());
        prop_assert!((got.total_cost - best).abs() <= 1e-9 * best.max(1.0));
        let recomputed: f64 = got.permutation.iter().enumerate().map(|(i, &k)| rows[i][k]).sum();
        prop_assert_eq!(recomputed, got.total_cost);
    }

    #[test]
    fn km_with_ties_is_still_optimal(rows in square(6, (0u8..4).prop_map(f64::from))) {
        let got = solve(&CostMatrix::from_rows(&rows).unwrap());
        prop_assert_eq!(got.total_cost, brute_force_min(&rows).0);
    }

    #[test]
    fn max_weight_on_negation_is_min_cost(rows in square(6, 0.0..50.0f64)) {
        let negated: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|c| -c).collect()).collect();
        let max = solve_max_weight(&negated);
        let min = solve(&CostMatrix::from_rows(&rows).unwrap());
        prop_assert!((max.total_cost + min.total_cost).abs() <= 1e-9 * min.total_cost.max(1.0));
    }

    #[test]
    fn reconfiguration_pins_leader_and_never_beats_identity(
        n in 3usize..=9,
        jitter in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), 8),
        pick in 0usize..4,
    ) {
        let formations = builtin_formations(n);
        prop_assume!(!formations.is_empty());
        let target = &formations[pick % formations.len()];
        let relative: Vec<Vec3> = (0..n - 1).map(|k| Vec3::new(jitter[k].0, jitter[k].1, jitter[k].2) * 2.0).collect();
        let rec = reconfigure(target, LeaderDesignation::new(0), &relative).unwrap();
        prop_assert_eq!((rec.mapping[0].agent, rec.mapping[0].slot), (0, 0));
        let mut slots: Vec<usize> = rec.mapping.iter().map(|m| m.slot).collect();
        slots.sort();
        prop_assert_eq!(slots, (0..n).collect::<Vec<_>>());
        prop_assert!(rec.total_cost <= rec.identity_cost + 1e-9);
        for m in &rec.mapping {
            prop_assert_eq!(m.offset, target.offsets[m.slot]);
        }
    }
}

#[test]
fn on_formation_assignment_is_identity() {
    for n in [4, 6, 9] {
        for f in builtin_formations(n) {
            let relative: Vec<Vec3> = f.offsets[1..].iter().map(|o| o - f.offsets[0]).collect();
            let rec = reconfigure(&f, LeaderDesignation::new(0), &relative).unwrap();
            assert!(rec.total_cost.abs() < 1e-12, "{} on {n}", f.name);
            assert!(rec.mapping.iter().enumerate().all(|(k, m)| m.slot == k));
        }
    }
}

#[test]
fn t_to_diamond_against_every_permutation() {
    let t = builtin_formation(6, "T").unwrap();
    let diamond = builtin_formation(6, "diamond").unwrap();
    let rel: Vec<Vec3> = t.offsets[1..].iter().map(|o| o - t.offsets[0]).collect();
    let rec = reconfigure(&diamond, LeaderDesignation::new(0), &rel).unwrap();
    let costs: Vec<f64> = permutations(5)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &k)| (rel[i] - diamond.offsets[k + 1]).norm()).sum())
        .collect();
    let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((rec.total_cost - best).abs() < 1e-12);
}

#[test]
fn leader_other_than_first_agent() {
    let f = builtin_formation(6, "T").unwrap();
    let rel: Vec<Vec3> = f.offsets[1..].iter().map(|o| o - f.offsets[0]).collect();
    let rec = reconfigure(&f, LeaderDesignation::new(3), &rel).unwrap();
    assert_eq!((rec.mapping[0].agent, rec.mapping[0].slot), (3, 0));
    let agents: Vec<usize> = rec.mapping[1..].iter().map(|m| m.agent).collect();
    assert_eq!(agents, vec![0, 1, 2, 4, 5]);
}
