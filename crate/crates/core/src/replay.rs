//! Re-execution of a logged run and snapshot comparison.

use std::fmt;

use thiserror::Error;

use crate::command::ScheduledCommand;
use crate::engine::{Engine, SimError};
use crate::telemetry::{Snapshot, TelemetryLog, FORMAT_VERSION};
use crate::{AgentId, Tick};

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub tick: Tick,
    /// First agent whose snapshot differs; `None` when the snapshot is
    /// missing or differs only outside the agent list.
    pub agent: Option<AgentId>,
    pub logged: Snapshot,
    pub replayed: Option<Snapshot>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.replayed, self.agent) {
            (None, _) => write!(f, "tick {}: replay produced no snapshot", self.tick),
            (Some(r), Some(a)) => write!(
                f,
                "tick {}: uav{} logged {:?}, replayed {:?}",
                self.tick,
                a + 1,
                self.logged.agents.get(a).map(|s| s.position.as_slice().to_vec()),
                r.agents.get(a).map(|s| s.position.as_slice().to_vec()),
            ),
            (Some(_), None) => write!(f, "tick {}: formation or agent count differs", self.tick),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    /// Logged snapshots checked.
    pub compared: usize,
    pub first_divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.first_divergence.is_none()
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.first_divergence {
            None => write!(f, "{} snapshots compared, no divergence", self.compared),
            Some(d) => write!(f, "{} snapshots compared, first divergence at {d}", self.compared),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log format version {0} is not supported (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("scenario hash mismatch: header says {expected}, embedded scenario hashes to {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Rebuilds the run from the header's scenario and seed, re-applies every
/// logged command at its logged tick, and compares each logged snapshot
/// with the regenerated one, bit for bit.
pub fn replay(log: &TelemetryLog) -> Result<ReplayReport, ReplayError> {
    let header = log.header();
    if header.format_version != FORMAT_VERSION {
        return Err(ReplayError::UnsupportedVersion(header.format_version));
    }
    let actual = header.scenario.hash();
    if actual != header.scenario_hash {
        return Err(ReplayError::HashMismatch { expected: header.scenario_hash.clone(), actual });
    }
    let Some((last_tick, _)) = log.last_snapshot() else {
        return Ok(ReplayReport::default());
    };

    let mut engine = Engine::with_warnings(&header.scenario, header.warnings.clone())?;
    engine.schedule(log.commands().map(|(tick, c)| ScheduledCommand { tick, command: c.command.clone() }));
    while engine.tick() < last_tick {
        if let Err(e) = engine.intake().and_then(|_| engine.advance()) {
            if matches!(e, SimError::NonFinite { .. }) {
                break;
            }
            return Err(e.into());
        }
    }
    engine.finish()?;
    let regenerated = engine.into_log()?;

    let mut report = ReplayReport::default();
    let mut replayed = regenerated.snapshots().peekable();
    for (tick, logged) in log.snapshots() {
        report.compared += 1;
        while replayed.next_if(|(t, _)| *t < tick).is_some() {}
        let mine = replayed.next_if(|(t, _)| *t == tick).map(|(_, s)| s);
        if let Some(d) = compare(tick, logged, mine) {
            report.first_divergence = Some(d);
            break;
        }
    }
    Ok(report)
}

fn compare(tick: Tick, logged: &Snapshot, replayed: Option<&Snapshot>) -> Option<Divergence> {
    let divergence = |agent| Divergence { tick, agent, logged: logged.clone(), replayed: replayed.cloned() };
    let Some(r) = replayed else { return Some(divergence(None)) };
    if let Some(a) = logged.agents.iter().zip(&r.agents).position(|(x, y)| !same_bits(x, y)) {
        return Some(divergence(Some(a)));
    }
    if logged.agents.len() != r.agents.len() || logged.formation != r.formation {
        return Some(divergence(None));
    }
    None
}

fn same_bits(a: &crate::telemetry::AgentSnapshot, b: &crate::telemetry::AgentSnapshot) -> bool {
    let bits = |v: &crate::Vec3| v.map(f64::to_bits);
    bits(&a.position) == bits(&b.position)
        && bits(&a.velocity) == bits(&b.velocity)
        && a.offset.map(|o| bits(&o)) == b.offset.map(|o| bits(&o))
}
