//! Nine UAVs from random starts into a cube; prints the formation error
//! every five simulated seconds.
//!
//!     cargo run --example formation_convergence -- [seed]

use std::path::Path;

use swarmsim::headless::{run_headless, HeadlessOptions};
use swarmsim::scenario::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/nine_uav_formation.json");
    let scenario = load_scenario(&path)?;
    let out = run_headless(&scenario, &HeadlessOptions { seed, ..Default::default() })?;
    let dt = out.log.header().dt;

    println!("seed {}", out.log.header().seed);
    println!("{:>6}  {:>12}", "t [s]", "error [m]");
    for (tick, snap) in out.log.snapshots().filter(|(t, _)| t % 250 == 0) {
        let offsets: Vec<_> = snap.agents.iter().map(|a| a.offset.unwrap_or_default()).collect();
        let mut worst: f64 = 0.0;
        for i in 0..offsets.len() {
            for j in i + 1..offsets.len() {
                let e = (snap.agents[i].position - offsets[i]) - (snap.agents[j].position - offsets[j]);
                worst = worst.max(e.norm());
            }
        }
        println!("{:>6.1}  {:>12.6}", tick as f64 * dt, worst);
    }
    println!("{} separation violations, {}", out.log.violations().count(), out.status);
    Ok(())
}
