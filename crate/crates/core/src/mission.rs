//! Cooperative area search: strip decomposition, boustrophedon sweeps,
//! waypoint tracking and a probabilistic footprint detector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentState, VelocityCommand};
use crate::{AgentId, Tick, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    /// Lower-left corner `(x, y)`.
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn x_max(&self) -> f64 {
        self.origin[0] + self.width
    }

    pub fn y_max(&self) -> f64 {
        self.origin[1] + self.height
    }

    /// Closed containment test with tolerance `eps`.
    pub fn contains(&self, x: f64, y: f64, eps: f64) -> bool {
        x >= self.origin[0] - eps && x <= self.x_max() + eps && y >= self.origin[1] - eps && y <= self.y_max() + eps
    }

    /// Area of the intersection with `other`.
    pub fn overlap(&self, other: &Rect) -> f64 {
        let w = self.x_max().min(other.x_max()) - self.origin[0].max(other.origin[0]);
        let h = self.y_max().min(other.y_max()) - self.origin[1].max(other.origin[1]);
        w.max(0.0) * h.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
    /// Sweep altitude, metres.
    pub altitude: f64,
}

impl SearchRegion {
    pub fn rect(&self) -> Rect {
        Rect { origin: self.origin, width: self.width, height: self.height }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.width > 0.0 && self.height > 0.0 && self.altitude > 0.0) {
            return Err("search region width, height and altitude must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPlan {
    pub agent: AgentId,
    pub cell: Rect,
    pub waypoints: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub agents: Vec<AgentPlan>,
}

/// `n` equal vertical strips, strip `k` for agent `k`. The last strip ends
/// exactly on the region edge.
pub fn decompose(region: &SearchRegion, n: usize) -> Vec<Rect> {
    assert!(n >= 1, "need at least one agent");
    let x0 = region.origin[0];
    let edge = |k: usize| {
        if k == n {
            x0 + region.width
        } else {
            x0 + region.width * k as f64 / n as f64
        }
    };
    (0..n)
        .map(|k| Rect {
            origin: [edge(k), region.origin[1]],
            width: edge(k + 1) - edge(k),
            height: region.height,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("swath must be positive, got {0}")]
    NonPositiveSwath(f64),
}

/// Track lines of a boustrophedon sweep: offsets across the short side of
/// `cell`, spacing at most `swath`, first and last on the cell edges.
/// Returns `(across_axis_is_x, positions)`.
fn track_positions(cell: &Rect, swath: f64) -> (bool, Vec<f64>) {
    let across_x = cell.width <= cell.height;
    let (start, span) = if across_x { (cell.origin[0], cell.width) } else { (cell.origin[1], cell.height) };
    let lines = (span / swath).ceil().max(1.0) as usize + 1;
    let step = span / (lines - 1) as f64;
    let positions = (0..lines)
        .map(|k| if k == lines - 1 { start + span } else { start + step * k as f64 })
        .collect();
    (across_x, positions)
}

/// Back-and-forth waypoints covering `cell` so every point lies within
/// `swath / 2` of a track. Tracks run along the cell's long side and
/// alternate direction.
pub fn lawnmower(cell: &Rect, swath: f64, altitude: f64) -> Result<Vec<Vec3>, PlanError> {
    if !(swath > 0.0) {
        return Err(PlanError::NonPositiveSwath(swath));
    }
    let (across_x, positions) = track_positions(cell, swath);
    let mut out = Vec::with_capacity(positions.len() * 2);
    for (k, &p) in positions.iter().enumerate() {
        let (lo, hi) = if across_x { (cell.origin[1], cell.y_max()) } else { (cell.origin[0], cell.x_max()) };
        let (a, b) = if k % 2 == 0 { (lo, hi) } else { (hi, lo) };
        for along in [a, b] {
            out.push(if across_x {
                Vec3::new(p, along, altitude)
            } else {
                Vec3::new(along, p, altitude)
            });
        }
    }
    Ok(out)
}

/// Decomposes `region` and plans one sweep per agent.
pub fn plan(region: &SearchRegion, n: usize, swath: f64) -> Result<SearchPlan, PlanError> {
    let agents = decompose(region, n)
        .into_iter()
        .enumerate()
        .map(|(agent, cell)| Ok(AgentPlan { agent, cell, waypoints: lawnmower(&cell, swath, region.altitude)? }))
        .collect::<Result<_, PlanError>>()?;
    Ok(SearchPlan { agents })
}

/// Length of the path from `start` through every waypoint in order.
pub fn path_length(start: Vec3, waypoints: &[Vec3]) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for w in waypoints {
        total += (w - prev).norm();
        prev = *w;
    }
    total
}

/// Progress of one agent along its waypoint list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WaypointProgress {
    pub index: usize,
}

impl WaypointProgress {
    pub fn finished(&self, plan: &[Vec3]) -> bool {
        self.index >= plan.len()
    }
}

/// Velocity toward the current waypoint, advancing past every waypoint
/// already inside `accept_radius`. Speed is `v_max`, reduced near the
/// waypoint so one tick of length `dt` never overshoots it.
pub fn track_waypoints(
    state: &AgentState,
    plan: &[Vec3],
    progress: &mut WaypointProgress,
    accept_radius: f64,
    v_max: f64,
    dt: f64,
    tick: Tick,
) -> VelocityCommand {
    while let Some(w) = plan.get(progress.index) {
        if (w - state.position).norm() <= accept_radius {
            progress.index += 1;
        } else {
            break;
        }
    }
    let u_desired = match plan.get(progress.index) {
        None => Vec3::zeros(),
        Some(w) => {
            let to = w - state.position;
            let dist = to.norm();
            to * (v_max.min(dist / dt) / dist)
        }
    };
    VelocityCommand { target: state.id, u_desired, tick_issued: tick }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub detector: AgentId,
    pub target_estimate: Vec3,
    pub tick: Tick,
}

/// Synthetic footprint sensor. Draws from `rng` only when the target lies
/// within `footprint_radius` horizontally.
pub fn detect<R: Rng + ?Sized>(
    state: &AgentState,
    target: Vec3,
    footprint_radius: f64,
    p_detect: f64,
    tick: Tick,
    rng: &mut R,
) -> Option<DetectionReport> {
    let dx = target.x - state.position.x;
    let dy = target.y - state.position.y;
    if dx.hypot(dy) > footprint_radius {
        return None;
    }
    (rng.random::<f64>() < p_detect).then_some(DetectionReport { detector: state.id, target_estimate: target, tick })
}
