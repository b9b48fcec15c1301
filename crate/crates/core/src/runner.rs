//! Run loop: stop conditions, pacing and pause handling around [`Engine`].

use std::time::Duration;

use crate::clock::{Pacer, SpeedFactor};
use crate::engine::{Engine, SimError};
use crate::scenario::ScenarioConfig;
use crate::telemetry::TelemetryLog;
use crate::Tick;

/// How often a paused run polls its intake queue.
const PAUSE_POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    /// Stop once this many ticks have run.
    TickLimit(Tick),
    /// Stop at the first tick whose sim time reaches this many seconds.
    SimTime(f64),
    /// Stop after the tick in which the search target is detected.
    MissionComplete,
    /// Stop only on a `stop` command.
    External,
}

impl StopCondition {
    /// The conditions a scenario's `stop` block asks for. A `stop` command
    /// always ends a run, so [`StopCondition::External`] is implied.
    pub fn from_config(config: &ScenarioConfig) -> Vec<StopCondition> {
        let mut out = Vec::new();
        if let Some(t) = config.stop.max_ticks {
            out.push(StopCondition::TickLimit(t));
        }
        if let Some(s) = config.stop.max_sim_time {
            out.push(StopCondition::SimTime(s));
        }
        if config.stop.mission_complete && config.mission.is_some() {
            out.push(StopCondition::MissionComplete);
        }
        out
    }

    /// True for conditions that end a run without outside help.
    pub fn is_bounded(&self) -> bool {
        matches!(self, StopCondition::TickLimit(_) | StopCondition::SimTime(_))
    }

    fn met(&self, engine: &Engine) -> bool {
        match *self {
            StopCondition::TickLimit(t) => engine.tick() >= t,
            StopCondition::SimTime(s) => engine.tick() >= engine.clock().tick_for(s),
            StopCondition::MissionComplete => engine.mission_complete(),
            StopCondition::External => false,
        }
    }
}

impl std::fmt::Display for StopCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopCondition::TickLimit(t) => write!(f, "tick limit {t}"),
            StopCondition::SimTime(s) => write!(f, "sim time {s} s"),
            StopCondition::MissionComplete => write!(f, "mission complete"),
            StopCondition::External => write!(f, "external stop"),
        }
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Condition(StopCondition),
    /// A `stop` command was applied.
    Stopped,
}

pub struct Runner {
    engine: Engine,
    until: Vec<StopCondition>,
    pacer: Pacer,
    honor_pause: bool,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner").field("engine", &self.engine).field("until", &self.until).finish_non_exhaustive()
    }
}

impl Runner {
    /// Paces at the engine's current speed factor.
    pub fn new(engine: Engine, until: Vec<StopCondition>) -> Self {
        let pacer = Pacer::new(engine.clock().dt, engine.control().speed, engine.tick());
        Self { engine, until, pacer, honor_pause: true }
    }

    /// With `false`, `pause` is logged but ticks keep coming. Headless runs
    /// use this since nothing could ever send the matching `resume`.
    pub fn honor_pause(mut self, honor: bool) -> Self {
        self.honor_pause = honor;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn pacer(&self) -> &Pacer {
        &self.pacer
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    pub fn into_log(self) -> Result<TelemetryLog, SimError> {
        self.engine.into_log()
    }

    pub fn run(&mut self) -> Result<StopReason, SimError> {
        self.run_with(|_| {})
    }

    /// Steps until a stop condition holds. `observer` sees the engine after
    /// every completed tick. On error the engine is left at the failing
    /// tick; [`Engine::finish`] still closes the log.
    pub fn run_with(&mut self, mut observer: impl FnMut(&Engine)) -> Result<StopReason, SimError> {
        loop {
            if let Some(c) = self.until.iter().find(|c| c.met(&self.engine)) {
                return Ok(StopReason::Condition(*c));
            }
            let mut control = self.engine.intake()?;
            if control.paused && self.honor_pause {
                while control.paused && !control.stop_requested {
                    std::thread::sleep(PAUSE_POLL);
                    control = self.engine.intake()?;
                }
                self.pacer.reanchor(self.engine.tick());
            }
            if control.stop_requested {
                return Ok(StopReason::Stopped);
            }
            if control.speed != self.pacer.speed() {
                self.pacer.set_speed(control.speed, self.engine.tick());
            }
            self.pacer.wait_for(self.engine.tick() + 1);
            self.engine.advance()?;
            observer(&self.engine);
        }
    }
}

/// Runs `config` to the first of `until` (or a `stop` command) at the
/// scenario's own speed factor.
pub fn run(config: &ScenarioConfig, until: &[StopCondition]) -> Result<TelemetryLog, SimError> {
    let mut runner = Runner::new(Engine::new(config)?, until.to_vec());
    runner.run()?;
    runner.into_log()
}

/// Same as [`run`] but never sleeps.
pub fn run_free(config: &ScenarioConfig, until: &[StopCondition]) -> Result<TelemetryLog, SimError> {
    let mut engine = Engine::new(config)?;
    engine.set_speed(SpeedFactor::FreeRun);
    let mut runner = Runner::new(engine, until.to_vec());
    runner.run()?;
    runner.into_log()
}
