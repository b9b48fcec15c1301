//! First-order integrator plant with a saturating velocity tracker standing in
//! for the low-level flight controller.

use serde::{Deserialize, Serialize};

use crate::{AgentId, Tick, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub position: Vec3,
    /// Last applied (saturated) velocity command.
    pub velocity: Vec3,
}

impl AgentState {
    pub fn at(id: AgentId, position: Vec3) -> Self {
        Self { id, position, velocity: Vec3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub target: AgentId,
    pub u_desired: Vec3,
    pub tick_issued: Tick,
}

/// Scales `u` down to magnitude `v_max` if it is faster, direction kept.
pub fn saturate(u: Vec3, v_max: f64) -> Vec3 {
    let norm = u.norm();
    if norm <= v_max {
        u
    } else {
        u * (v_max / norm)
    }
}

/// Forward-Euler step of `ξ' = u`. Returns `None` if the result is not finite.
pub fn integrate(state: &AgentState, u: Vec3, dt: f64) -> Option<AgentState> {
    let next = AgentState {
        id: state.id,
        position: state.position + u * dt,
        velocity: u,
    };
    next.is_finite().then_some(next)
}
