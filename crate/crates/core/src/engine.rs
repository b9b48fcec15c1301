//! Lockstep engine.
//!
//! One tick runs every phase of [`StepPhase`] for all agents before the next
//! tick starts. Controllers read the tick-`t` snapshot and write tick-`t+1`
//! state into a separate buffer, so agent iteration order never matters.
//! All randomness comes from a single seeded ChaCha stream.

use std::collections::{BTreeSet, VecDeque};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::reconfigure;
use crate::avoidance::{avoidance_vector, SkippedTerm};
use crate::bus::{relative_positions, topics, AssignmentTable, BusError, Endpoint, Payload, StateReport, SwarmBus, TopicMessage};
use crate::clock::{SimClock, SpeedFactor};
use crate::command::{ScheduledCommand, SwarmCommand};
use crate::dynamics::{integrate, saturate, AgentState};
use crate::formation::{consensus_velocity, formation_error, NeighborReport};
use crate::mission::{detect, plan, track_waypoints, DetectionReport, SearchPlan, WaypointProgress};
use crate::scenario::{InitialPositions, ResolvedScenario, ScenarioConfig, ScenarioIssue, TargetSpec};
use crate::telemetry::{
    AgentSnapshot, AssignmentRecord, CommandOutcome, CommandRecord, EventPayload, LogError, LogHeader, Notice,
    Snapshot, TelemetryLog, Violation, FORMAT_VERSION,
};
use crate::{AgentId, Tick, Vec3};

/// Fixed order of work inside one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepPhase {
    CommandIntake,
    BusDelivery,
    Coordination,
    HighLevelControl,
    LowLevelControl,
    Integrate,
    Telemetry,
}

impl StepPhase {
    pub const ALL: [StepPhase; 7] = [
        StepPhase::CommandIntake,
        StepPhase::BusDelivery,
        StepPhase::Coordination,
        StepPhase::HighLevelControl,
        StepPhase::LowLevelControl,
        StepPhase::Integrate,
        StepPhase::Telemetry,
    ];
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("agent {} has a non-finite state in phase {phase:?} at tick {tick}", .agent + 1)]
    NonFinite { agent: AgentId, phase: StepPhase, tick: Tick },
    #[error("invalid scenario: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Scenario(Vec<ScenarioIssue>),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// What an agent knows locally.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentMemory {
    /// Messages delivered this tick.
    pub inbox: Vec<TopicMessage>,
    pub offset: Option<Vec3>,
    pub slot: Option<usize>,
    pub formation: Option<String>,
    pub assignment_seq: u64,
    /// Leader only: last commanded velocity.
    pub leader_velocity: Vec3,
    pub waypoints: WaypointProgress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionState {
    pub plan: SearchPlan,
    pub target: Vec3,
    pub detection: Option<DetectionReport>,
}

/// Complete simulation state at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub tick: Tick,
    pub agents: Vec<AgentState>,
    pub memory: Vec<AgentMemory>,
    pub bus: SwarmBus,
    pub mission: Option<MissionState>,
    pub reconfig_seq: u64,
    /// Pairs currently closer than the separation limit.
    separation_active: BTreeSet<(AgentId, AgentId)>,
}

impl WorldState {
    pub fn snapshot(&self, leader: AgentId) -> Snapshot {
        Snapshot {
            agents: self
                .agents
                .iter()
                .zip(&self.memory)
                .map(|(a, m)| AgentSnapshot { position: a.position, velocity: a.velocity, offset: m.offset })
                .collect(),
            formation: self.memory.get(leader).and_then(|m| m.formation.clone()),
        }
    }

    /// Max pairwise formation error once every agent holds a slot.
    pub fn formation_error(&self) -> Option<f64> {
        let offsets: Option<Vec<Vec3>> = self.memory.iter().map(|m| m.offset).collect();
        offsets.map(|o| formation_error(&self.agents, &o).max_error)
    }
}

/// A command waiting in the intake queue. `at_tick = None` means "next
/// boundary".
#[derive(Debug, Clone, PartialEq)]
pub struct QueuedCommand {
    pub command: SwarmCommand,
    pub at_tick: Option<Tick>,
}

/// Thread-safe handle for submitting commands to a running engine.
#[derive(Debug, Clone)]
pub struct CommandSender(Sender<QueuedCommand>);

impl CommandSender {
    /// Returns `false` once the engine is gone.
    pub fn send(&self, command: SwarmCommand) -> bool {
        self.0.send(QueuedCommand { command, at_tick: None }).is_ok()
    }

    pub fn send_at(&self, command: SwarmCommand, tick: Tick) -> bool {
        self.0.send(QueuedCommand { command, at_tick: Some(tick) }).is_ok()
    }
}

/// Whether `command` would be accepted by an engine running `scenario`.
/// The engine applies the same test at intake; front ends call it to reject
/// early.
pub fn precheck(scenario: &ResolvedScenario, command: &SwarmCommand) -> Result<(), String> {
    command.check()?;
    let mission = scenario.config.mission.is_some();
    match command {
        SwarmCommand::SetFormation { .. } if mission => Err("formation commands are ignored during a search mission".into()),
        SwarmCommand::SetFormation { name } if scenario.formation(name).is_none() => {
            Err(format!("unknown formation `{name}`"))
        }
        SwarmCommand::LeaderVelocity { .. } if mission => Err("leader steering is ignored during a search mission".into()),
        _ => Ok(()),
    }
}

/// Pacing and run-control state changed by commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunControl {
    pub paused: bool,
    pub speed: SpeedFactor,
    pub stop_requested: bool,
}

pub struct Engine {
    scenario: Arc<ResolvedScenario>,
    clock: SimClock,
    world: WorldState,
    rng: ChaCha8Rng,
    log: TelemetryLog,
    script: VecDeque<ScheduledCommand>,
    intake_tx: Sender<QueuedCommand>,
    intake_rx: Receiver<QueuedCommand>,
    waiting: Vec<QueuedCommand>,
    control: RunControl,
    intake_done_for: Option<Tick>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("scenario", &self.scenario.config.name)
            .field("tick", &self.clock.tick)
            .field("control", &self.control)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        Self::with_warnings(config, Vec::new())
    }

    /// `warnings` are copied into the log header.
    pub fn with_warnings(config: &ScenarioConfig, warnings: Vec<String>) -> Result<Self, SimError> {
        let scenario = Arc::new(config.resolve().map_err(SimError::Scenario)?);
        let n = scenario.n();
        let leader = scenario.leader.leader_index;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let positions: Vec<Vec3> = match &config.agents.initial {
            InitialPositions::Positions(ps) => ps.clone(),
            InitialPositions::RandomCube { center, side } => (0..n)
                .map(|_| {
                    let u = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
                    center + (u - Vec3::repeat(0.5)) * *side
                })
                .collect(),
            InitialPositions::Formation { name, leader_position } => {
                let spec = scenario.formation(name).expect("validated");
                let mut slots = 1..;
                (0..n)
                    .map(|i| {
                        let slot = if i == leader { 0 } else { slots.next().expect("unbounded") };
                        leader_position + spec.offsets[slot]
                    })
                    .collect()
            }
        };
        let agents: Vec<AgentState> = positions.into_iter().enumerate().map(|(i, p)| AgentState::at(i, p)).collect();

        let mission = match &config.mission {
            None => None,
            Some(m) => {
                let region = m.region();
                let target = match m.target {
                    TargetSpec::Position(p) => p,
                    TargetSpec::Keyword(_) => Vec3::new(
                        region.origin[0] + rng.random::<f64>() * region.width,
                        region.origin[1] + rng.random::<f64>() * region.height,
                        0.0,
                    ),
                };
                let plan = plan(&region, n, m.swath).expect("swath validated");
                Some(MissionState { plan, target, detection: None })
            }
        };

        let mut bus = SwarmBus::new(n);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                bus.subscribe(topics::state(j), Endpoint::Agent(i));
            }
            if i == leader {
                bus.subscribe(topics::FORMATION_CMD, Endpoint::Agent(i));
                bus.subscribe(topics::cmd_vel(i), Endpoint::Agent(i));
            } else {
                bus.subscribe(topics::ASSIGNMENT, Endpoint::Agent(i));
            }
        }
        bus.subscribe(topics::DETECTION, Endpoint::GroundStation);

        let world = WorldState {
            tick: 0,
            agents,
            memory: vec![AgentMemory::default(); n],
            bus,
            mission,
            reconfig_seq: 0,
            separation_active: BTreeSet::new(),
        };
        let mut log = TelemetryLog::new(LogHeader {
            format_version: FORMAT_VERSION,
            scenario_hash: config.hash(),
            seed: config.seed,
            dt: config.dt,
            snapshot_every: config.telemetry.snapshot_every,
            scenario: config.clone(),
            warnings,
        });
        log.record(0, EventPayload::Snapshot(world.snapshot(leader)))?;

        let (intake_tx, intake_rx) = mpsc::channel();
        Ok(Self {
            control: RunControl { paused: false, speed: scenario.speed, stop_requested: false },
            clock: SimClock::new(config.dt),
            scenario,
            world,
            rng,
            log,
            script: VecDeque::new(),
            intake_tx,
            intake_rx,
            waiting: Vec::new(),
            intake_done_for: None,
        })
    }

    pub fn scenario(&self) -> &ResolvedScenario {
        &self.scenario
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn tick(&self) -> Tick {
        self.clock.tick
    }

    pub fn sim_time(&self) -> f64 {
        self.clock.sim_time()
    }

    pub fn log(&self) -> &TelemetryLog {
        &self.log
    }

    pub fn into_log(mut self) -> Result<TelemetryLog, SimError> {
        self.finish()?;
        Ok(self.log)
    }

    pub fn control(&self) -> RunControl {
        self.control
    }

    /// Pacing chosen by the front end. Not logged and not part of the
    /// scenario hash; `set_speed` commands still override it later.
    pub fn set_speed(&mut self, speed: SpeedFactor) {
        self.control.speed = speed;
    }

    pub fn leader(&self) -> AgentId {
        self.scenario.leader.leader_index
    }

    pub fn snapshot(&self) -> Snapshot {
        self.world.snapshot(self.leader())
    }

    pub fn detection(&self) -> Option<&DetectionReport> {
        self.world.mission.as_ref().and_then(|m| m.detection.as_ref())
    }

    pub fn mission_complete(&self) -> bool {
        self.detection().is_some()
    }

    pub fn command_sender(&self) -> CommandSender {
        CommandSender(self.intake_tx.clone())
    }

    /// Adds commands to apply at fixed ticks. Equal ticks keep their order.
    pub fn schedule(&mut self, commands: impl IntoIterator<Item = ScheduledCommand>) {
        let mut all: Vec<_> = self.script.drain(..).chain(commands).collect();
        all.sort_by_key(|c| c.tick);
        self.script = all.into();
    }

    /// Records the final snapshot if decimation skipped it. Idempotent.
    pub fn finish(&mut self) -> Result<(), SimError> {
        let tick = self.clock.tick;
        if self.log.last_snapshot().map(|(t, _)| t) != Some(tick) {
            self.log.insert_ordered(tick, EventPayload::Snapshot(self.snapshot()));
        }
        Ok(())
    }

    /// Full tick: command intake followed by every other phase.
    pub fn step(&mut self) -> Result<&WorldState, SimError> {
        self.intake()?;
        self.advance()?;
        Ok(&self.world)
    }

    /// `CommandIntake` phase. May run several times at one tick while paused;
    /// each call drains whatever has arrived since.
    pub fn intake(&mut self) -> Result<RunControl, SimError> {
        let t = self.clock.tick;
        if self.intake_done_for != Some(t) {
            self.check_world(StepPhase::CommandIntake)?;
            self.intake_done_for = Some(t);
        }
        while self.script.front().is_some_and(|c| c.tick <= t) {
            let c = self.script.pop_front().expect("front exists");
            self.apply_command(c.command)?;
        }
        while let Ok(q) = self.intake_rx.try_recv() {
            self.waiting.push(q);
        }
        let (due, later): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.waiting).into_iter().partition(|q| q.at_tick.is_none_or(|at| at <= t));
        self.waiting = later;
        for q in due {
            self.apply_command(q.command)?;
        }
        Ok(self.control)
    }

    fn apply_command(&mut self, command: SwarmCommand) -> Result<(), SimError> {
        let t = self.clock.tick;
        let outcome = match self.execute(&command, t) {
            Ok(()) => CommandOutcome::Accepted,
            Err(reason) => CommandOutcome::Rejected(reason),
        };
        self.log.record(t, EventPayload::Command(CommandRecord { command, outcome }))?;
        Ok(())
    }

    fn execute(&mut self, command: &SwarmCommand, t: Tick) -> Result<(), String> {
        precheck(&self.scenario, command)?;
        let leader = self.leader();
        match command {
            SwarmCommand::SetFormation { name } => {
                self.world
                    .bus
                    .publish(topics::FORMATION_CMD, Endpoint::GroundStation, t, Payload::FormationCommand { name: name.clone() })
                    .map_err(|e| e.to_string())?;
            }
            SwarmCommand::LeaderVelocity { velocity } => {
                self.world
                    .bus
                    .publish(topics::cmd_vel(leader), Endpoint::GroundStation, t, Payload::LeaderVelocity(*velocity))
                    .map_err(|e| e.to_string())?;
            }
            SwarmCommand::Pause => self.control.paused = true,
            SwarmCommand::Resume => self.control.paused = false,
            SwarmCommand::SetSpeed { factor } => self.control.speed = SpeedFactor::from_factor(*factor)?,
            SwarmCommand::Stop => self.control.stop_requested = true,
        }
        Ok(())
    }

    fn check_world(&self, phase: StepPhase) -> Result<(), SimError> {
        match self.world.agents.iter().find(|a| !a.is_finite()) {
            Some(a) => Err(SimError::NonFinite { agent: a.id, phase, tick: self.clock.tick }),
            None => Ok(()),
        }
    }

    /// Every phase after `CommandIntake`, ending at tick `t + 1`.
    pub fn advance(&mut self) -> Result<(), SimError> {
        let t = self.clock.tick;
        if self.intake_done_for != Some(t) {
            self.check_world(StepPhase::CommandIntake)?;
        }
        self.bus_delivery(t)?;
        self.coordination(t)?;
        let desired = self.high_level_control(t)?;
        let commanded = self.low_level_control(&desired);
        let next = self.integrate(t, &commanded)?;
        self.telemetry(t, next, &commanded)?;
        Ok(())
    }

    fn bus_delivery(&mut self, t: Tick) -> Result<(), SimError> {
        for m in &mut self.world.memory {
            m.inbox.clear();
        }
        for (receiver, msg, record) in self.world.bus.deliver(t, &self.scenario.topology) {
            self.log.record(t, EventPayload::Delivery(record))?;
            if let Endpoint::Agent(i) = receiver {
                self.world.memory[i].inbox.push(msg);
            }
        }
        Ok(())
    }

    fn coordination(&mut self, t: Tick) -> Result<(), SimError> {
        let leader = self.leader();
        let mut requested: Option<String> = None;
        if t == 0 && self.world.mission.is_none() {
            requested = self.scenario.config.initial_formation.clone();
        }
        let Some(mem) = self.world.memory.get_mut(leader) else {
            return Ok(());
        };
        for msg in &mem.inbox {
            match &msg.payload {
                Payload::FormationCommand { name } => requested = Some(name.clone()),
                Payload::LeaderVelocity(v) => mem.leader_velocity = *v,
                _ => {}
            }
        }
        if let Some(name) = requested {
            let target = self.scenario.formation(&name).expect("checked at intake").clone();
            let relative: Vec<Vec3> = relative_positions(leader, &self.world.agents, None).into_iter().map(|r| r.r).collect();
            match reconfigure(&target, self.scenario.leader, &relative) {
                Ok(reconfiguration) => {
                    self.world.reconfig_seq += 1;
                    let seq = self.world.reconfig_seq;
                    let mem = &mut self.world.memory[leader];
                    mem.offset = Some(target.offsets[0]);
                    mem.slot = Some(0);
                    mem.formation = Some(target.name.clone());
                    mem.assignment_seq = seq;
                    self.log.record(t, EventPayload::Assignment(AssignmentRecord::Applied { seq, reconfiguration: reconfiguration.clone() }))?;
                    self.world.bus.publish(
                        topics::ASSIGNMENT,
                        Endpoint::Agent(leader),
                        t,
                        Payload::Assignment(AssignmentTable { seq, reconfiguration }),
                    )?;
                }
                Err(e) => {
                    self.log.record(t, EventPayload::Assignment(AssignmentRecord::Rejected { formation: name, reason: e.to_string() }))?;
                }
            }
        }
        for i in (0..self.world.agents.len()).filter(|&i| i != leader) {
            let newest = self.world.memory[i]
                .inbox
                .iter()
                .filter_map(|m| match &m.payload {
                    Payload::Assignment(table) => Some(table),
                    _ => None,
                })
                .filter(|table| table.seq > self.world.memory[i].assignment_seq)
                .max_by_key(|table| table.seq)
                .cloned();
            let Some(table) = newest else { continue };
            let mem = &mut self.world.memory[i];
            if let Some(entry) = table.reconfiguration.mapping.iter().find(|m| m.agent == i) {
                mem.offset = Some(entry.offset);
                mem.slot = Some(entry.slot);
            }
            mem.formation = Some(table.reconfiguration.formation.clone());
            mem.assignment_seq = table.seq;
            // relay so followers beyond the leader's reach hear it too
            self.world.bus.publish(topics::ASSIGNMENT, Endpoint::Agent(i), t, Payload::Assignment(table))?;
        }
        Ok(())
    }

    fn high_level_control(&mut self, t: Tick) -> Result<Vec<Vec3>, SimError> {
        let n = self.world.agents.len();
        let leader = self.leader();

        let min_sep = self.scenario.min_separation;
        for a in 0..n {
            for b in a + 1..n {
                let distance = (self.world.agents[a].position - self.world.agents[b].position).norm();
                if distance < min_sep {
                    if self.world.separation_active.insert((a, b)) {
                        self.log.record(t, EventPayload::Violation(Violation::Separation { a, b, distance }))?;
                    }
                } else {
                    self.world.separation_active.remove(&(a, b));
                }
            }
        }

        if let (Some(ms), Some(cfg)) = (self.world.mission.as_mut(), self.scenario.config.mission.as_ref()) {
            if ms.detection.is_none() {
                for state in &self.world.agents {
                    if let Some(report) = detect(state, ms.target, cfg.footprint_radius, cfg.p_detect, t, &mut self.rng) {
                        self.log.record(t, EventPayload::Detection(report))?;
                        self.world.bus.publish(topics::DETECTION, Endpoint::Agent(state.id), t, Payload::Detection(report))?;
                        ms.detection = Some(report);
                        break;
                    }
                }
            }
        }

        let mut desired = Vec::with_capacity(n);
        let mut notices = Vec::new();
        for i in 0..n {
            let state = &self.world.agents[i];
            let mem = &mut self.world.memory[i];
            let mut u = match (&self.world.mission, self.scenario.config.mission.as_ref()) {
                (Some(ms), Some(cfg)) => {
                    let plan = &ms.plan.agents[i].waypoints;
                    track_waypoints(state, plan, &mut mem.waypoints, cfg.accept_radius, self.scenario.config.agents.v_max, self.clock.dt, t)
                        .u_desired
                }
                _ if i == leader => mem.leader_velocity,
                _ => match mem.offset {
                    None => Vec3::zeros(),
                    Some(offset) => {
                        let neighbors: Vec<NeighborReport> = mem
                            .inbox
                            .iter()
                            .filter_map(|m| match (&m.payload, m.sender) {
                                (Payload::State(s), Endpoint::Agent(j)) => {
                                    Some(NeighborReport { id: j, position: s.position, offset: s.offset })
                                }
                                _ => None,
                            })
                            .collect();
                        let out = consensus_velocity(i, state, offset, &neighbors, &self.scenario.topology, self.scenario.config.control.gain);
                        notices.extend(out.missing.into_iter().map(|neighbor| Notice::MissingNeighbor { agent: i, neighbor }));
                        out.u
                    }
                },
            };
            if let Some(cfg) = &self.scenario.avoidance {
                let out = avoidance_vector(&relative_positions(i, &self.world.agents, Some(cfg.b)), cfg);
                u += out.vector.a;
                notices.extend(out.skipped.into_iter().map(|s| match s {
                    SkippedTerm::Coincident(neighbor) => Notice::CoincidentNeighbor { agent: i, neighbor },
                    SkippedTerm::Degenerate(neighbor) => Notice::DegenerateAvoidance { agent: i, neighbor },
                }));
            }
            if !u.iter().all(|c| c.is_finite()) {
                return Err(SimError::NonFinite { agent: i, phase: StepPhase::HighLevelControl, tick: t });
            }
            desired.push(u);
        }
        for notice in notices {
            self.log.record(t, EventPayload::Notice(notice))?;
        }
        Ok(desired)
    }

    fn low_level_control(&self, desired: &[Vec3]) -> Vec<Vec3> {
        let v_max = self.scenario.config.agents.v_max;
        desired.iter().map(|u| saturate(*u, v_max)).collect()
    }

    fn integrate(&self, t: Tick, commanded: &[Vec3]) -> Result<Vec<AgentState>, SimError> {
        self.world
            .agents
            .iter()
            .zip(commanded)
            .map(|(s, u)| {
                integrate(s, *u, self.clock.dt).ok_or(SimError::NonFinite { agent: s.id, phase: StepPhase::Integrate, tick: t })
            })
            .collect()
    }

    fn telemetry(&mut self, t: Tick, next: Vec<AgentState>, commanded: &[Vec3]) -> Result<(), SimError> {
        for (i, state) in self.world.agents.iter().enumerate() {
            let report = StateReport { position: state.position, velocity: commanded[i], offset: self.world.memory[i].offset };
            self.world.bus.publish(topics::state(i), Endpoint::Agent(i), t, Payload::State(report))?;
        }
        self.world.agents = next;
        self.world.tick = t + 1;
        self.clock.tick = t + 1;
        if (t + 1).is_multiple_of(self.scenario.config.telemetry.snapshot_every) {
            let snap = self.snapshot();
            self.log.record(t + 1, EventPayload::Snapshot(snap))?;
        }
        Ok(())
    }

    /// Test hook: overwrite one agent's state between ticks.
    #[doc(hidden)]
    pub fn world_mut(&mut self) -> &mut WorldState {
        &mut self.world
    }
}
