#![allow(dead_code)]

use std::path::PathBuf;

use swarmsim::command::CommandScript;
use swarmsim::scenario::{load_scenario, LoadedScenario};
use swarmsim::telemetry::Snapshot;

/// Every shipped scenario.
pub const SUITE: &[&str] = &[
    "cooperative_search",
    "forced_collision",
    "nine_uav_formation",
    "nine_uav_reconfiguration",
    "nine_uav_unsaturated",
    "six_uav_t_to_diamond",
    "tick_limit",
];

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load(name: &str) -> LoadedScenario {
    load_scenario(&scenarios_dir().join(format!("{name}.json"))).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// The scenario's command script, if it ships one.
pub fn script(name: &str) -> Option<CommandScript> {
    let p = scenarios_dir().join(format!("{name}.commands.json"));
    p.exists().then(|| CommandScript::load(&p).unwrap())
}

/// Max over pairs of |(p_i - o_i) - (p_j - o_j)|, recomputed from a logged
/// snapshot. `None` while some agent has no slot.
pub fn snapshot_error(s: &Snapshot) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for (i, a) in s.agents.iter().enumerate() {
        for b in &s.agents[i + 1..] {
            let e = ((a.position - a.offset?) - (b.position - b.offset?)).norm();
            worst = worst.max(e);
        }
    }
    Some(worst)
}

pub fn min_distance(s: &Snapshot) -> f64 {
    let mut d = f64::INFINITY;
    for (i, a) in s.agents.iter().enumerate() {
        for b in &s.agents[i + 1..] {
            d = d.min((a.position - b.position).norm());
        }
    }
    d
}

/// All permutations of `0..n`, lexicographic.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                go(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Exhaustive minimum of `sum_i c[i][p(i)]` and one minimising permutation.
pub fn brute_force_min(c: &[Vec<f64>]) -> (f64, Vec<usize>) {
    permutations(c.len())
        .into_iter()
        .map(|p| (p.iter().enumerate().map(|(i, &k)| c[i][k]).sum::<f64>(), p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
}
