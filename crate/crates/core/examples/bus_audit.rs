//! Counts bus traffic by topic for a short run, audits it against the
//! topology, then forges a delivery the topology forbids.

use std::collections::BTreeMap;
use std::path::Path;

use swarmsim::bus::{audit, DeliveryRecord, Endpoint};
use swarmsim::headless::{run_headless, HeadlessOptions};
use swarmsim::scenario::load_scenario;
use swarmsim::telemetry::{EventPayload, SimEvent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let scenario = load_scenario(&dir.join("tick_limit.json"))?;
    let topology = scenario.config.resolve().map_err(|e| format!("{e:?}"))?.topology;
    let mut log = run_headless(&scenario, &HeadlessOptions::default())?.log;

    let mut by_topic: BTreeMap<String, usize> = BTreeMap::new();
    for e in log.events() {
        if let EventPayload::Delivery(d) = &e.payload {
            *by_topic.entry(d.topic.clone()).or_default() += 1;
        }
    }
    for (topic, n) in &by_topic {
        println!("{topic:<24} {n}");
    }
    println!("audit: {} violations", audit(&log, &topology).len());

    let seq = log.len() as u64;
    log.events_mut().push(SimEvent {
        tick: 500,
        seq,
        payload: EventPayload::Delivery(DeliveryRecord {
            topic: "/uav6/state".into(),
            sender: Endpoint::Agent(5),
            receiver: Endpoint::Agent(0),
            seq: 0,
            tick_sent: 499,
            tick_delivered: 500,
        }),
    });
    for v in audit(&log, &topology) {
        println!("flagged: {v}");
    }
    Ok(())
}
