//! The six-UAV communication matrix, chain presets, and what validation
//! says about a few broken ones.

use swarmsim::topology::{chain_topology, six_uav_example, validate, LeaderDesignation, TopologyMatrix};

fn show(name: &str, t: &TopologyMatrix) {
    println!("{name}");
    for row in t.rows() {
        let cells: Vec<String> = row.iter().map(|w| format!("{w:.0}")).collect();
        println!("  [{}]", cells.join(" "));
    }
}

fn main() {
    let six = six_uav_example();
    show("six_uav_example", &six);
    println!("equals chain_topology(6, 2): {}", six == chain_topology(6, 2));
    for i in 0..6 {
        let hears: Vec<String> = six.in_neighbors(i).map(|j| format!("uav{}", j + 1)).collect();
        println!("  uav{} hears {}", i + 1, if hears.is_empty() { "nobody".into() } else { hears.join(", ") });
    }

    show("chain_topology(9, 2)", &chain_topology(9, 2));

    let mut cut = chain_topology(5, 1);
    cut.set_weight(3, 2, 0.0);
    let mut looped = chain_topology(4, 1);
    looped.set_weight(0, 3, 1.0);
    for (name, t) in [("chain(5,1) with uav3 -> uav4 cut", cut), ("chain(4,1) plus uav4 -> uav1", looped)] {
        println!("{name}:");
        for v in validate(&t, LeaderDesignation::new(0)) {
            println!("  {v}");
        }
    }
}
