//! Batch runs from a scenario file with an optional command script.

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::clock::SpeedFactor;
use crate::command::CommandScript;
use crate::engine::{Engine, SimError};
use crate::runner::{Runner, StopCondition, StopReason};
use crate::scenario::LoadedScenario;
use crate::telemetry::{LogError, TelemetryLog};

/// Process exit status of a headless run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// The engine stopped on a non-finite state.
    Halted = 1,
    /// At least one separation violation was logged.
    Violations = 2,
    /// A search mission ended without a detection.
    MissionIncomplete = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl fmt::Display for ExitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExitStatus::Success => "success",
            ExitStatus::Halted => "engine halted",
            ExitStatus::Violations => "separation violations",
            ExitStatus::MissionIncomplete => "target not detected",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct HeadlessOptions {
    /// Replaces the scenario seed; the log header records the result.
    pub seed: Option<u64>,
    /// Pacing; free-run when absent.
    pub speed: Option<f64>,
    pub script: Option<CommandScript>,
    pub log_path: Option<PathBuf>,
}

#[derive(Debug)]
pub struct HeadlessOutcome {
    pub status: ExitStatus,
    pub log: TelemetryLog,
    /// `None` when the engine halted.
    pub reason: Option<StopReason>,
    /// The halt diagnostic, if any.
    pub halt: Option<SimError>,
}

#[derive(Debug, Error)]
pub enum HeadlessError {
    #[error("scenario has no tick or sim-time limit; add `stop.max_ticks` or `stop.max_sim_time`")]
    Unbounded,
    #[error("{0}")]
    Option(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("writing log: {0}")]
    Log(#[from] LogError),
}

pub fn run_headless(scenario: &LoadedScenario, options: &HeadlessOptions) -> Result<HeadlessOutcome, HeadlessError> {
    let mut config = scenario.config.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    let speed = match options.speed {
        Some(f) => SpeedFactor::from_factor(f).map_err(HeadlessError::Option)?,
        None => SpeedFactor::FreeRun,
    };
    let until = StopCondition::from_config(&config);
    if !until.iter().any(StopCondition::is_bounded) {
        return Err(HeadlessError::Unbounded);
    }

    let mut engine = Engine::with_warnings(&config, scenario.warnings.clone())?;
    engine.set_speed(speed);
    if let Some(script) = &options.script {
        engine.schedule(script.commands.iter().cloned());
    }
    let mut runner = Runner::new(engine, until).honor_pause(false);
    let (reason, halt) = match runner.run() {
        Ok(r) => (Some(r), None),
        Err(e @ SimError::NonFinite { .. }) => (None, Some(e)),
        Err(e) => return Err(e.into()),
    };
    let mut engine = runner.into_engine();
    engine.finish()?;
    let mission = engine.world().mission.is_some();
    let log = engine.into_log()?;

    let status = if halt.is_some() {
        ExitStatus::Halted
    } else if log.violations().next().is_some() {
        ExitStatus::Violations
    } else if mission && log.detections().next().is_none() {
        ExitStatus::MissionIncomplete
    } else {
        ExitStatus::Success
    };
    if let Some(path) = &options.log_path {
        log.save(path)?;
    }
    Ok(HeadlessOutcome { status, log, reason, halt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;
    use std::path::Path;

    fn loaded(stop: &str) -> LoadedScenario {
        let text = format!(
            r#"{{"schema_version": 1, "name": "pair",
                "agents": {{"count": 2, "initial": {{"positions": [[0,0,10],[6,0,10]]}}}},
                "topology": {{"preset": "chain", "fan_in": 1}}{stop}}}"#
        );
        ScenarioConfig::from_json_str(&text, Path::new(".")).unwrap()
    }

    #[test]
    fn refuses_unbounded() {
        let err = run_headless(&loaded(""), &HeadlessOptions::default()).unwrap_err();
        assert!(matches!(err, HeadlessError::Unbounded));
    }

    #[test]
    fn tick_limit_success() {
        let out = run_headless(&loaded(r#", "stop": {"max_ticks": 12}"#), &HeadlessOptions::default()).unwrap();
        assert_eq!(out.status, ExitStatus::Success);
        assert_eq!(out.log.snapshots().count(), 13);
        assert!(out.log.header().warnings.is_empty());
    }

    #[test]
    fn seed_override_lands_in_header() {
        let opts = HeadlessOptions { seed: Some(99), ..Default::default() };
        let out = run_headless(&loaded(r#", "stop": {"max_ticks": 1}"#), &opts).unwrap();
        assert_eq!(out.log.header().seed, 99);
        assert_eq!(out.log.header().scenario.seed, 99);
    }

    #[test]
    fn bad_speed_is_rejected() {
        let opts = HeadlessOptions { speed: Some(-2.0), ..Default::default() };
        assert!(matches!(run_headless(&loaded(r#", "stop": {"max_ticks": 1}"#), &opts), Err(HeadlessError::Option(_))));
    }

    #[test]
    fn writes_log_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.swlog");
        let opts = HeadlessOptions { log_path: Some(path.clone()), ..Default::default() };
        let out = run_headless(&loaded(r#", "stop": {"max_ticks": 3}"#), &opts).unwrap();
        assert_eq!(TelemetryLog::load(&path).unwrap(), out.log);
    }
}
