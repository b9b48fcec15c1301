//! Simulation clock and wall-clock pacing.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::Tick;

/// Sim time is always `tick * dt`, never accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub tick: Tick,
    pub dt: f64,
}

impl SimClock {
    pub fn new(dt: f64) -> Self {
        Self { tick: 0, dt }
    }

    pub fn sim_time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    /// First tick whose sim time reaches `seconds`.
    pub fn tick_for(&self, seconds: f64) -> Tick {
        (seconds / self.dt - 1e-9).ceil().max(0.0) as Tick
    }
}

/// Sim seconds per wall second, or as fast as possible.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum SpeedFactor {
    #[default]
    FreeRun,
    Scaled(f64),
}

impl SpeedFactor {
    /// `0` is the free-run sentinel; negative or non-finite values are rejected.
    pub fn from_factor(factor: f64) -> Result<Self, String> {
        if factor == 0.0 {
            Ok(Self::FreeRun)
        } else if factor.is_finite() && factor > 0.0 {
            Ok(Self::Scaled(factor))
        } else {
            Err(format!("speed factor must be positive (or 0 for free-run), got {factor}"))
        }
    }

    pub fn as_factor(&self) -> f64 {
        match self {
            Self::FreeRun => 0.0,
            Self::Scaled(f) => *f,
        }
    }
}

/// Sleeps so that tick `k` is reached no earlier than
/// `anchor_wall + (k - anchor_tick) * dt / speed`. Re-anchors whenever the
/// speed changes, so a change takes effect from the next boundary only.
#[derive(Debug, Clone)]
pub struct Pacer {
    dt: f64,
    speed: SpeedFactor,
    anchor_tick: Tick,
    anchor_wall: Instant,
}

impl Pacer {
    pub fn new(dt: f64, speed: SpeedFactor, tick: Tick) -> Self {
        Self { dt, speed, anchor_tick: tick, anchor_wall: Instant::now() }
    }

    pub fn speed(&self) -> SpeedFactor {
        self.speed
    }

    pub fn set_speed(&mut self, speed: SpeedFactor, tick: Tick) {
        self.speed = speed;
        self.reanchor(tick);
    }

    /// Call after a pause so the pause is not "caught up".
    pub fn reanchor(&mut self, tick: Tick) {
        self.anchor_tick = tick;
        self.anchor_wall = Instant::now();
    }

    /// Wall instant at which `tick` is due, `None` when free-running.
    pub fn due(&self, tick: Tick) -> Option<Instant> {
        match self.speed {
            SpeedFactor::FreeRun => None,
            SpeedFactor::Scaled(f) => {
                let sim = tick.saturating_sub(self.anchor_tick) as f64 * self.dt;
                Some(self.anchor_wall + Duration::from_secs_f64(sim / f))
            }
        }
    }

    pub fn wait_for(&self, tick: Tick) {
        if let Some(due) = self.due(tick) {
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
    }
}
