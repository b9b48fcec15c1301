//! Kuhn-Munkres slot assignment for a T to diamond switch, checked against
//! every permutation.

use swarmsim::assignment::{cost_matrix_from_relative, reconfigure};
use swarmsim::formation::builtin_formation;
use swarmsim::topology::LeaderDesignation;
use swarmsim::Vec3;

fn main() {
    let t = builtin_formation(6, "T").expect("builtin");
    let diamond = builtin_formation(6, "diamond").expect("builtin");
    // followers sitting exactly on their T slots
    let relative: Vec<Vec3> = t.offsets[1..].iter().map(|o| o - t.offsets[0]).collect();

    let cost = cost_matrix_from_relative(&relative, &diamond).expect("sizes match");
    println!("cost matrix (follower x diamond slot 1..5):");
    for i in 0..cost.len() {
        let row: Vec<String> = (0..cost.len()).map(|k| format!("{:6.3}", cost.get(i, k))).collect();
        println!("  uav{}  {}", i + 2, row.join(" "));
    }

    let rec = reconfigure(&diamond, LeaderDesignation::new(0), &relative).expect("sizes match");
    for m in &rec.mapping {
        println!("uav{} -> slot {} at {:?}", m.agent + 1, m.slot, m.offset.as_slice());
    }
    println!("total {:.4}, keeping ranks would cost {:.4}", rec.total_cost, rec.identity_cost);

    let mut best = f64::INFINITY;
    let mut p: Vec<usize> = (0..5).collect();
    permute(&mut p, 0, &mut |p| best = best.min(cost.cost_of(p)));
    println!("exhaustive minimum {best:.4}");
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}
