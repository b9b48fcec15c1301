//! Messages exchanged over the gateway WebSocket.
//!
//! Every WebSocket text frame carries newline-delimited JSON: one or more
//! objects, each on its own line, each tagged by `"kind"`. Agent ids on the
//! wire are 1-based. See `docs/wire-protocol.md`.

use serde::{Deserialize, Serialize};
use swarmsim::command::SwarmCommand;
use swarmsim::engine::Engine;
use swarmsim::Tick;

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Command {
        /// Echoed in the `ack` or `error` reply.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        command: SwarmCommand,
        /// Apply at this tick instead of the next boundary.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at_tick: Option<Tick>,
    },
    /// Releases a server started with `--hold`. A struct variant so that
    /// stray fields are rejected like everywhere else.
    Start {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireAgent {
    pub id: usize,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// 1-based formation slot; `null` before the first assignment.
    pub slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionStatus {
    pub detected: bool,
    pub detector: Option<usize>,
    pub detection_tick: Option<Tick>,
    pub target_estimate: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub tick: Tick,
    pub sim_time: f64,
    pub agents: Vec<WireAgent>,
    pub formation: Option<String>,
    /// Max pairwise formation error once every agent holds a slot.
    pub formation_error: Option<f64>,
    pub mission: Option<MissionStatus>,
    pub paused: bool,
    /// `0` is free-run.
    pub speed_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSlot {
    pub agent: usize,
    pub slot: usize,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    /// First message on every connection.
    Hello {
        scenario: String,
        agents: usize,
        dt: f64,
        formations: Vec<String>,
        decimation: u64,
        /// True while a `--hold` server waits for `start`.
        held: bool,
    },
    StateSnapshot(StateSnapshot),
    Ack {
        id: Option<u64>,
        command: SwarmCommand,
        /// Engine tick when the command was queued; it applies at this
        /// boundary or the next one (or at `at_tick`).
        tick: Tick,
    },
    Error {
        id: Option<u64>,
        message: String,
    },
    /// Reply to `start`.
    Started {
        tick: Tick,
    },
    Assignment {
        tick: Tick,
        seq: u64,
        formation: String,
        mapping: Vec<WireSlot>,
        total_cost: f64,
    },
    RunEnded {
        tick: Tick,
        reason: String,
    },
}

impl ServerMessage {
    /// One line of newline-delimited JSON.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages serialize");
        s.push('\n');
        s
    }
}

/// Splits a frame into its JSON lines and parses each one.
pub fn parse_client_frame(frame: &str) -> Vec<Result<ClientMessage, String>> {
    frame
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("malformed message: {e}")))
        .collect()
}

pub fn state_snapshot(engine: &Engine) -> StateSnapshot {
    let world = engine.world();
    let v = |x: &swarmsim::Vec3| [x.x, x.y, x.z];
    let mission = world.mission.as_ref().map(|m| MissionStatus {
        detected: m.detection.is_some(),
        detector: m.detection.map(|d| d.detector + 1),
        detection_tick: m.detection.map(|d| d.tick),
        target_estimate: m.detection.map(|d| v(&d.target_estimate)),
    });
    StateSnapshot {
        tick: engine.tick(),
        sim_time: engine.sim_time(),
        agents: world
            .agents
            .iter()
            .zip(&world.memory)
            .map(|(a, m)| WireAgent {
                id: a.id + 1,
                position: v(&a.position),
                velocity: v(&a.velocity),
                slot: m.slot.map(|s| s + 1),
            })
            .collect(),
        formation: world.memory.get(engine.leader()).and_then(|m| m.formation.clone()),
        formation_error: world.formation_error(),
        mission,
        paused: engine.control().paused,
        speed_factor: engine.control().speed.as_factor(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use swarmsim::Vec3;

    #[test]
    fn command_frame() {
        let msgs = parse_client_frame(
            "{\"kind\":\"command\",\"id\":4,\"command\":{\"type\":\"set_formation\",\"name\":\"pyramid\"}}\n{\"kind\":\"start\"}\n",
        );
        assert_eq!(
            msgs,
            vec![
                Ok(ClientMessage::Command {
                    id: Some(4),
                    command: SwarmCommand::SetFormation { name: "pyramid".into() },
                    at_tick: None
                }),
                Ok(ClientMessage::Start {})
            ]
        );
    }

    #[test]
    fn malformed_lines_are_errors() {
        let msgs = parse_client_frame("{\"kind\":\"command\",\"command\":{\"type\":\"warp\"}}\nnot json");
        assert_eq!(msgs.len(), 2);
        assert!(msgs.iter().all(|m| m.is_err()));
    }

    #[test]
    fn server_kinds() {
        let ack = ServerMessage::Ack {
            id: None,
            command: SwarmCommand::LeaderVelocity { velocity: Vec3::new(1.0, 0.0, 0.0) },
            tick: 3,
        };
        let line = ack.to_line();
        assert!(line.ends_with('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["kind"], "ack");
        assert_eq!(v["command"]["type"], "leader_velocity");
        let back: ServerMessage = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ack);
    }
}
