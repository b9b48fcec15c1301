//! Reactive inter-agent avoidance.
//!
//! Every neighbour within range `b` contributes a deflection perpendicular to
//! the line of sight, `kp (1 - |r|/b) (r × n) / |r × n|`, where the auxiliary
//! axis `n` is whichever of `n1 = x̂`, `n2 = ŷ` is less aligned with `r`.

use serde::{Deserialize, Serialize};

use crate::bus::RelativePositionReport;
use crate::dynamics::saturate;
use crate::{AgentId, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceConfig {
    /// Trigger range, metres.
    pub b: f64,
    pub kp: f64,
    pub n1: Vec3,
    pub n2: Vec3,
    /// Compare signed projections `r·n1 < r·n2` instead of magnitudes.
    /// The signed form picks `n1` for `r = (-1, 0, 0)`, which makes `r × n1`
    /// vanish; such terms are skipped.
    pub literal_branch: bool,
}

impl Default for AvoidanceConfig {
    fn default() -> Self {
        Self {
            b: 3.0,
            kp: 1.0,
            n1: Vec3::x(),
            n2: Vec3::y(),
            literal_branch: false,
        }
    }
}

impl AvoidanceConfig {
    pub fn with_range(b: f64, kp: f64) -> Self {
        Self { b, kp, ..Self::default() }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(format!("avoidance range b must be positive, got {}", self.b));
        }
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            return Err(format!("avoidance kp must be positive, got {}", self.kp));
        }
        let unit = |v: &Vec3| (v.norm() - 1.0).abs() < 1e-12;
        if !unit(&self.n1) || !unit(&self.n2) || self.n1.dot(&self.n2).abs() > 1e-12 {
            return Err("auxiliary vectors n1, n2 must be orthonormal".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AvoidanceVector {
    pub a: Vec3,
}

/// Why a neighbour's term was left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkippedTerm {
    /// Agents share a position; no line of sight.
    Coincident(AgentId),
    /// `r` is parallel to the selected auxiliary axis (literal branch only).
    Degenerate(AgentId),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AvoidanceOutput {
    pub vector: AvoidanceVector,
    pub skipped: Vec<SkippedTerm>,
}

fn select_axis(r: &Vec3, config: &AvoidanceConfig) -> Vec3 {
    let (p1, p2) = (r.dot(&config.n1), r.dot(&config.n2));
    let pick_n1 = if config.literal_branch { p1 < p2 } else { p1.abs() < p2.abs() };
    if pick_n1 {
        config.n1
    } else {
        config.n2
    }
}

/// Sums deflections over `reports`; neighbours farther than `b` are ignored.
pub fn avoidance_vector(reports: &[RelativePositionReport], config: &AvoidanceConfig) -> AvoidanceOutput {
    let mut a = Vec3::zeros();
    let mut skipped = Vec::new();
    for report in reports {
        let r = report.r;
        let dist = r.norm();
        if dist > config.b {
            continue;
        }
        if dist == 0.0 {
            skipped.push(SkippedTerm::Coincident(report.neighbor));
            continue;
        }
        let cross = r.cross(&select_axis(&r, config));
        let cross_norm = cross.norm();
        if cross_norm <= f64::EPSILON * dist {
            skipped.push(SkippedTerm::Degenerate(report.neighbor));
            continue;
        }
        a += config.kp * (1.0 - dist / config.b) * (cross / cross_norm);
    }
    AvoidanceOutput { vector: AvoidanceVector { a }, skipped }
}

/// Desired velocity handed to the low-level tracker.
pub fn compose_velocity(u_consensus: Vec3, a: AvoidanceVector, v_max: f64) -> Vec3 {
    saturate(u_consensus + a.a, v_max)
}
