//! In-process publish/subscribe with topology-gated delivery.
//!
//! Messages published during tick `t` are delivered in the `BusDelivery`
//! phase of tick `t + 1`, sorted by `(topic, sender, sequence)`. Inter-agent
//! traffic passes only along edges with `w[receiver][sender] > 0`; the ground
//! station is exempt in both directions.
//!
//! Topic names (agent numbers are 1-based):
//!
//! | topic                    | sender          | payload          |
//! |--------------------------|-----------------|------------------|
//! | `/uav<k>/state`          | agent k         | [`StateReport`]  |
//! | `/uav<k>/cmd_vel`        | ground station  | leader velocity  |
//! | `/leader/formation_cmd`  | ground station  | formation name   |
//! | `/leader/assignment`     | leader, relayed | assignment table |
//! | `/mission/detection`     | detecting agent | detection report |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Reconfiguration;
use crate::dynamics::AgentState;
use crate::mission::DetectionReport;
use crate::telemetry::{EventPayload, TelemetryLog};
use crate::topology::TopologyMatrix;
use crate::{AgentId, Tick, Vec3};

pub mod topics {
    use crate::AgentId;

    pub const FORMATION_CMD: &str = "/leader/formation_cmd";
    pub const ASSIGNMENT: &str = "/leader/assignment";
    pub const DETECTION: &str = "/mission/detection";

    pub fn state(agent: AgentId) -> String {
        format!("/uav{}/state", agent + 1)
    }

    pub fn cmd_vel(agent: AgentId) -> String {
        format!("/uav{}/cmd_vel", agent + 1)
    }

    /// `/segment/segment...` with non-empty `[A-Za-z0-9_]` segments.
    pub fn is_well_formed(topic: &str) -> bool {
        topic.strip_prefix('/').is_some_and(|rest| {
            rest.split('/').all(|seg| {
                !seg.is_empty() && seg.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Agent(AgentId),
    GroundStation,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Agent(i) => write!(f, "uav{}", i + 1),
            Endpoint::GroundStation => write!(f, "ground-station"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Sender's current formation offset, if it holds a slot.
    pub offset: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentTable {
    /// Increments with every reconfiguration the leader decides.
    pub seq: u64,
    pub reconfiguration: Reconfiguration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    State(StateReport),
    FormationCommand { name: String },
    LeaderVelocity(Vec3),
    Assignment(AssignmentTable),
    Detection(DetectionReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMessage {
    pub topic: String,
    pub sender: Endpoint,
    pub tick_sent: Tick,
    pub seq: u64,
    pub payload: Payload,
}

/// One admitted delivery, as written to the telemetry log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub topic: String,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub seq: u64,
    pub tick_sent: Tick,
    pub tick_delivered: Tick,
}

#[derive(Debug, Error, PartialEq)]
pub enum BusError {
    #[error("unknown sender {0}")]
    UnknownSender(Endpoint),
    #[error("malformed topic `{0}`")]
    MalformedTopic(String),
}

/// True iff inter-agent traffic from `sender` may reach `receiver`.
/// Ground-station traffic is always admitted.
pub fn gate(sender: Endpoint, receiver: Endpoint, topology: &TopologyMatrix) -> bool {
    match (sender, receiver) {
        (Endpoint::Agent(s), Endpoint::Agent(r)) => s != r && topology.weight(r, s) > 0.0,
        _ => true,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SwarmBus {
    n_agents: usize,
    subscriptions: BTreeMap<String, BTreeSet<Endpoint>>,
    outbox: Vec<TopicMessage>,
    next_seq: u64,
}

impl SwarmBus {
    pub fn new(n_agents: usize) -> Self {
        Self { n_agents, ..Default::default() }
    }

    fn known(&self, e: Endpoint) -> bool {
        match e {
            Endpoint::Agent(i) => i < self.n_agents,
            Endpoint::GroundStation => true,
        }
    }

    pub fn subscribe(&mut self, topic: impl Into<String>, who: Endpoint) {
        self.subscriptions.entry(topic.into()).or_default().insert(who);
    }

    pub fn subscribers(&self, topic: &str) -> impl Iterator<Item = Endpoint> + '_ {
        self.subscriptions.get(topic).into_iter().flatten().copied()
    }

    /// Queues a message for delivery on the next tick. Returns its sequence
    /// number.
    pub fn publish(
        &mut self,
        topic: impl Into<String>,
        sender: Endpoint,
        tick: Tick,
        payload: Payload,
    ) -> Result<u64, BusError> {
        let topic = topic.into();
        if !self.known(sender) {
            return Err(BusError::UnknownSender(sender));
        }
        if !topics::is_well_formed(&topic) {
            return Err(BusError::MalformedTopic(topic));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.outbox.push(TopicMessage { topic, sender, tick_sent: tick, seq, payload });
        Ok(seq)
    }

    pub fn pending(&self) -> &[TopicMessage] {
        &self.outbox
    }

    /// Hands every queued message to each subscriber the gate admits.
    /// Only messages sent before `tick` are delivered.
    pub fn deliver(&mut self, tick: Tick, topology: &TopologyMatrix) -> Vec<(Endpoint, TopicMessage, DeliveryRecord)> {
        let (mut due, later): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.outbox).into_iter().partition(|m| m.tick_sent < tick);
        self.outbox = later;
        due.sort_by(|a, b| (&a.topic, a.sender, a.seq).cmp(&(&b.topic, b.sender, b.seq)));
        let mut out = Vec::new();
        for msg in due {
            for receiver in self.subscribers(&msg.topic) {
                if receiver == msg.sender || !gate(msg.sender, receiver, topology) {
                    continue;
                }
                let record = DeliveryRecord {
                    topic: msg.topic.clone(),
                    sender: msg.sender,
                    receiver,
                    seq: msg.seq,
                    tick_sent: msg.tick_sent,
                    tick_delivered: tick,
                };
                out.push((receiver, msg.clone(), record));
            }
        }
        out
    }
}

/// Ground-truth vector from `observer` to `neighbor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePositionReport {
    pub observer: AgentId,
    pub neighbor: AgentId,
    pub r: Vec3,
}

/// Ground-truth relative positions of every other agent within `range_limit`
/// (`None` = unlimited), from one snapshot. Not subject to the bus gate.
pub fn relative_positions(
    observer: AgentId,
    states: &[AgentState],
    range_limit: Option<f64>,
) -> Vec<RelativePositionReport> {
    let origin = states[observer].position;
    states
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != observer)
        .map(|(j, s)| RelativePositionReport { observer, neighbor: j, r: s.position - origin })
        .filter(|rep| range_limit.is_none_or(|limit| rep.r.norm() <= limit))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditViolation {
    /// Delivery along an edge the topology does not have.
    Ungated { record: DeliveryRecord },
    /// Delivered at other than `tick_sent + 1`.
    Latency { record: DeliveryRecord },
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ungated { record } => write!(
                f,
                "{} -> {} on {} (seq {}) has no topology edge",
                record.sender, record.receiver, record.topic, record.seq
            ),
            Self::Latency { record } => write!(
                f,
                "{} -> {} on {} sent at tick {} delivered at tick {}",
                record.sender, record.receiver, record.topic, record.tick_sent, record.tick_delivered
            ),
        }
    }
}

/// Re-checks every logged delivery against the topology.
pub fn audit(log: &TelemetryLog, topology: &TopologyMatrix) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    for ev in log.events() {
        let EventPayload::Delivery(record) = &ev.payload else { continue };
        let in_range = |e: Endpoint| match e {
            Endpoint::Agent(i) => i < topology.len(),
            Endpoint::GroundStation => true,
        };
        if !in_range(record.sender) || !in_range(record.receiver) || !gate(record.sender, record.receiver, topology) {
            out.push(AuditViolation::Ungated { record: record.clone() });
        }
        if record.tick_delivered != record.tick_sent + 1 {
            out.push(AuditViolation::Latency { record: record.clone() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{chain_topology, six_uav_example};

    fn state_payload() -> Payload {
        Payload::State(StateReport { position: Vec3::zeros(), velocity: Vec3::zeros(), offset: None })
    }

    #[test]
    fn gate_cases() {
        let t = six_uav_example();
        assert!(gate(Endpoint::Agent(0), Endpoint::Agent(1), &t));
        assert!(!gate(Endpoint::Agent(5), Endpoint::Agent(0), &t));
        for i in 0..6 {
            assert!(!gate(Endpoint::Agent(i), Endpoint::Agent(i), &t));
        }
        assert!(gate(Endpoint::GroundStation, Endpoint::Agent(0), &t));
        assert!(gate(Endpoint::Agent(5), Endpoint::GroundStation, &t));
    }

    #[test]
    fn topic_names() {
        assert_eq!(topics::state(0), "/uav1/state");
        assert_eq!(topics::cmd_vel(8), "/uav9/cmd_vel");
        for t in [topics::FORMATION_CMD, topics::ASSIGNMENT, topics::DETECTION] {
            assert!(topics::is_well_formed(t));
        }
        assert!(!topics::is_well_formed("uav1/state"));
        assert!(!topics::is_well_formed("/uav1//state"));
        assert!(!topics::is_well_formed("/uav 1"));
    }

    #[test]
    fn publish_rejects_unknown_sender_and_bad_topic() {
        let mut bus = SwarmBus::new(2);
        assert_eq!(
            bus.publish("/uav3/state", Endpoint::Agent(2), 0, state_payload()),
            Err(BusError::UnknownSender(Endpoint::Agent(2)))
        );
        assert!(matches!(
            bus.publish("nope", Endpoint::Agent(0), 0, state_payload()),
            Err(BusError::MalformedTopic(_))
        ));
    }

    #[test]
    fn one_tick_latency() {
        let top = chain_topology(2, 1);
        let mut bus = SwarmBus::new(2);
        bus.subscribe(topics::state(0), Endpoint::Agent(1));
        bus.publish(topics::state(0), Endpoint::Agent(0), 5, state_payload()).unwrap();
        assert!(bus.deliver(5, &top).is_empty());
        let got = bus.deliver(6, &top);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, Endpoint::Agent(1));
        assert_eq!(got[0].2.tick_sent + 1, got[0].2.tick_delivered);
        assert!(bus.pending().is_empty());
    }

    #[test]
    fn leader_command_reaches_all_subscribers() {
        let top = six_uav_example();
        let mut bus = SwarmBus::new(6);
        for i in 1..6 {
            bus.subscribe("/leader/formation_cmd", Endpoint::Agent(i));
        }
        bus.publish(topics::FORMATION_CMD, Endpoint::Agent(0), 0, Payload::FormationCommand { name: "x".into() })
            .unwrap();
        assert_eq!(bus.pending().len(), 1);
        // only direct out-neighbours of the leader are admitted
        let receivers: Vec<_> = bus.deliver(1, &top).into_iter().map(|d| d.0).collect();
        assert_eq!(receivers, vec![Endpoint::Agent(1), Endpoint::Agent(2)]);
    }

    #[test]
    fn ground_station_bypasses_gate() {
        let top = six_uav_example();
        let mut bus = SwarmBus::new(6);
        for i in 0..6 {
            bus.subscribe(topics::FORMATION_CMD, Endpoint::Agent(i));
        }
        bus.publish(topics::FORMATION_CMD, Endpoint::GroundStation, 0, Payload::FormationCommand { name: "x".into() })
            .unwrap();
        assert_eq!(bus.deliver(1, &top).len(), 6);
    }

    #[test]
    fn delivery_order_sorted() {
        let top = chain_topology(3, 2);
        let mut bus = SwarmBus::new(3);
        bus.subscribe(topics::state(1), Endpoint::Agent(2));
        bus.subscribe(topics::state(0), Endpoint::Agent(2));
        bus.subscribe(topics::state(0), Endpoint::Agent(1));
        bus.publish(topics::state(1), Endpoint::Agent(1), 0, state_payload()).unwrap();
        bus.publish(topics::state(0), Endpoint::Agent(0), 0, state_payload()).unwrap();
        let order: Vec<_> = bus.deliver(1, &top).into_iter().map(|(r, m, _)| (m.topic, r)).collect();
        assert_eq!(
            order,
            vec![
                ("/uav1/state".to_string(), Endpoint::Agent(1)),
                ("/uav1/state".to_string(), Endpoint::Agent(2)),
                ("/uav2/state".to_string(), Endpoint::Agent(2)),
            ]
        );
    }

    #[test]
    fn relative_position_cases() {
        let states = [AgentState::at(0, Vec3::zeros()), AgentState::at(1, Vec3::new(3.0, 0.0, 0.0))];
        let r = relative_positions(0, &states, None);
        assert_eq!(r, vec![RelativePositionReport { observer: 0, neighbor: 1, r: Vec3::new(3.0, 0.0, 0.0) }]);
        assert!(relative_positions(0, &states[..1], None).is_empty());
        assert!(relative_positions(0, &states, Some(2.0)).is_empty());
    }
}
