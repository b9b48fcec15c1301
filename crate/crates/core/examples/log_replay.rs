//! Writes a log, reads it back, replays it, then tampers with one position
//! and replays again. Ends with the first rows of the z-axis curves.

use std::path::Path;

use swarmsim::headless::{run_headless, HeadlessOptions};
use swarmsim::replay::replay;
use swarmsim::scenario::load_scenario;
use swarmsim::telemetry::{export_curves, Axis, EventPayload, TelemetryLog};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/tick_limit.json");
    let scenario = load_scenario(&path)?;
    let file = std::env::temp_dir().join("swarmsim-example.swlog");
    run_headless(&scenario, &HeadlessOptions { log_path: Some(file.clone()), ..Default::default() })?;

    let mut log = TelemetryLog::load(&file)?;
    println!("{}: {} events, {} bytes", file.display(), log.len(), std::fs::metadata(&file)?.len());
    println!("replay: {}", replay(&log)?);

    for e in log.events_mut().iter_mut().filter(|e| e.tick == 250) {
        if let EventPayload::Snapshot(s) = &mut e.payload {
            s.agents[4].position.y += 1e-9;
        }
    }
    println!("after tampering: {}", replay(&log)?);

    let tsv = export_curves(&TelemetryLog::load(&file)?, Axis::Z).to_tsv();
    for line in tsv.lines().take(4) {
        println!("{line}");
    }
    std::fs::remove_file(file)?;
    Ok(())
}
