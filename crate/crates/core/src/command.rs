//! Operator commands and scripted command files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scenario::strip_comments;
use crate::{Tick, Vec3};

/// Operator command, applied only at a tick boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwarmCommand {
    SetFormation { name: String },
    LeaderVelocity { velocity: Vec3 },
    Pause,
    Resume,
    /// `0` selects free-run.
    SetSpeed { factor: f64 },
    Stop,
}

impl SwarmCommand {
    /// Checks that do not need the engine.
    pub fn check(&self) -> Result<(), String> {
        match self {
            SwarmCommand::SetSpeed { factor } if !(factor.is_finite() && *factor >= 0.0) => {
                Err(format!("speed factor must be positive or 0 for free-run, got {factor}"))
            }
            SwarmCommand::LeaderVelocity { velocity } if !velocity.iter().all(|c| c.is_finite()) => {
                Err("leader velocity must be finite".into())
            }
            SwarmCommand::SetFormation { name } if name.is_empty() => Err("formation name is empty".into()),
            _ => Ok(()),
        }
    }

    /// Commands that change what agents do, as opposed to pacing controls.
    pub fn affects_swarm(&self) -> bool {
        matches!(self, SwarmCommand::SetFormation { .. } | SwarmCommand::LeaderVelocity { .. })
    }
}

/// A command bound to the tick at which it must be applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledCommand {
    pub tick: Tick,
    pub command: SwarmCommand,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandScript {
    pub commands: Vec<ScheduledCommand>,
}

impl CommandScript {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        strip_comments(&mut value);
        let mut script: CommandScript = serde_json::from_value(value).map_err(|e| e.to_string())?;
        for (k, c) in script.commands.iter().enumerate() {
            c.command.check().map_err(|e| format!("commands[{k}]: {e}"))?;
        }
        // stable: equal ticks keep file order
        script.commands.sort_by_key(|c| c.tick);
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
