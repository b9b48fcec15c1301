//! Cube, then pyramid at 60 s, then triangle at 120 s, driven by a command
//! script. Prints each assignment the leader decides and the closest
//! approach between any two UAVs.

use std::path::Path;

use swarmsim::command::CommandScript;
use swarmsim::headless::{run_headless, HeadlessOptions};
use swarmsim::scenario::load_scenario;
use swarmsim::telemetry::AssignmentRecord;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let scenario = load_scenario(&dir.join("nine_uav_reconfiguration.json"))?;
    let script = CommandScript::load(&dir.join("nine_uav_reconfiguration.commands.json"))?;
    let out = run_headless(&scenario, &HeadlessOptions { script: Some(script), ..Default::default() })?;

    for (tick, record) in out.log.assignments() {
        match record {
            AssignmentRecord::Applied { seq, reconfiguration: r } => {
                let slots: Vec<String> = r.mapping.iter().map(|m| format!("uav{}->{}", m.agent + 1, m.slot)).collect();
                println!(
                    "tick {tick:>5}  #{seq} {:<9} cost {:>7.3} (identity {:>7.3})  {}",
                    r.formation,
                    r.total_cost,
                    r.identity_cost,
                    slots.join(" ")
                );
            }
            AssignmentRecord::Rejected { formation, reason } => println!("tick {tick:>5}  {formation} rejected: {reason}"),
        }
    }

    let mut closest = (f64::INFINITY, 0);
    for (tick, s) in out.log.snapshots() {
        for (i, a) in s.agents.iter().enumerate() {
            for b in &s.agents[i + 1..] {
                let d = (a.position - b.position).norm();
                if d < closest.0 {
                    closest = (d, tick);
                }
            }
        }
    }
    println!("closest approach {:.3} m at tick {}, b = {}", closest.0, closest.1, scenario.config.avoidance.b);
    Ok(())
}
