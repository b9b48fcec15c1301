//! The avoidance vector for a few hand-picked neighbours, then a head-on
//! swap flown with and without it.

use std::path::Path;

use swarmsim::avoidance::{avoidance_vector, AvoidanceConfig};
use swarmsim::bus::RelativePositionReport;
use swarmsim::headless::{run_headless, HeadlessOptions};
use swarmsim::scenario::load_scenario;
use swarmsim::Vec3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AvoidanceConfig::with_range(2.0, 1.0);
    for r in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.5), Vec3::new(3.0, 0.0, 0.0)] {
        let a = avoidance_vector(&[RelativePositionReport { observer: 0, neighbor: 1, r }], &cfg).vector.a;
        println!("r = {:?}  a = {:?}  a.r = {:+.1e}", r.as_slice(), a.as_slice(), a.dot(&r));
    }
    let literal = AvoidanceConfig { literal_branch: true, ..cfg };
    let out = avoidance_vector(&[RelativePositionReport { observer: 0, neighbor: 1, r: Vec3::new(-1.0, 0.0, 0.0) }], &literal);
    println!("signed comparison on r = (-1, 0, 0): a = {:?}, skipped {:?}", out.vector.a.as_slice(), out.skipped);

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/forced_collision.json");
    let mut scenario = load_scenario(&path)?;
    for enabled in [false, true] {
        scenario.config.avoidance.enabled = enabled;
        let out = run_headless(&scenario, &HeadlessOptions::default())?;
        let closest = out
            .log
            .snapshots()
            .map(|(_, s)| (s.agents[0].position - s.agents[1].position).norm())
            .fold(f64::INFINITY, f64::min);
        println!("avoidance {enabled:<5}  closest {closest:.3} m  violations {}  {}", out.log.violations().count(), out.status);
    }
    Ok(())
}
