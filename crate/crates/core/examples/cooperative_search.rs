//! Six UAVs sweep their strips of a 60 x 10 m field until one sees the
//! target.
//!
//!     cargo run --example cooperative_search -- [seed]

use std::path::Path;

use swarmsim::headless::{run_headless, HeadlessOptions};
use swarmsim::mission::{path_length, plan};
use swarmsim::scenario::{load_scenario, InitialPositions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/cooperative_search.json");
    let scenario = load_scenario(&path)?;
    let mission = scenario.config.mission.clone().expect("search scenario");
    let InitialPositions::Positions(starts) = &scenario.config.agents.initial else { unreachable!() };

    let sweep = plan(&mission.region(), scenario.config.agents.count, mission.swath)?;
    for a in &sweep.agents {
        println!(
            "uav{}  strip x {:>5.1}..{:<5.1}  {} waypoints  {:>6.1} m",
            a.agent + 1,
            a.cell.origin[0],
            a.cell.x_max(),
            a.waypoints.len(),
            path_length(starts[a.agent], &a.waypoints)
        );
    }

    let out = run_headless(&scenario, &HeadlessOptions { seed, ..Default::default() })?;
    match out.log.detections().next() {
        Some(d) => println!(
            "seed {}: uav{} found the target at {:?} on tick {} ({:.2} s)",
            out.log.header().seed,
            d.detector + 1,
            d.target_estimate.as_slice(),
            d.tick,
            d.tick as f64 * out.log.header().dt
        ),
        None => println!("seed {}: no detection", out.log.header().seed),
    }
    Ok(())
}
