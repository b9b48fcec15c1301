//! Declarative run description and its loader.
//!
//! Scenario files are JSON. Any object may carry a `"_comment"` key, which is
//! ignored. Agent numbers in files are 1-based. The full field reference is
//! in `docs/scenario-schema.md`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::avoidance::AvoidanceConfig;
use crate::clock::SpeedFactor;
use crate::formation::{builtin_formation, builtin_formations, FormationSpec};
use crate::mission::SearchRegion;
use crate::topology::{chain_topology, validate, LeaderDesignation, TopologyMatrix};
use crate::Vec3;

pub const SCHEMA_VERSION: u32 = 1;

fn default_dt() -> f64 {
    0.02
}
fn default_v_max() -> f64 {
    2.0
}
fn default_one() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_b() -> f64 {
    3.0
}
fn default_leader() -> usize {
    1
}
fn default_p_detect() -> f64 {
    0.9
}
fn default_footprint() -> f64 {
    5.0
}
fn default_accept() -> f64 {
    0.5
}
fn default_every() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sim seconds per wall second; `0` runs free.
    #[serde(default)]
    pub speed_factor: f64,
    pub agents: AgentsConfig,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub formations: Vec<FormationRef>,
    #[serde(default)]
    pub initial_formation: Option<String>,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub avoidance: AvoidanceSettings,
    #[serde(default)]
    pub safety: SafetyConfig,
    #[serde(default)]
    pub mission: Option<MissionConfig>,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub telemetry: TelemetryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    pub count: usize,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    pub initial: InitialPositions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPositions {
    /// One position per agent, agent 1 first.
    Positions(Vec<Vec3>),
    /// Uniform in an axis-aligned cube, drawn from the scenario seed.
    RandomCube { center: Vec3, side: f64 },
    /// Exactly on a formation, leader at `leader_position`.
    Formation { name: String, leader_position: Vec3 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// `"chain"` (needs `fan_in`) or absent when `matrix` is given.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub fan_in: Option<usize>,
    /// Row-major weights, row `i` = what agent `i` receives.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// 1-based leader id.
    #[serde(default = "default_leader")]
    pub leader: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<Vec3>>,
}

impl FormationRef {
    pub fn builtin(name: &str) -> Self {
        Self { builtin: Some(name.into()), file: None, name: None, offsets: None }
    }

    pub fn inline(spec: &FormationSpec) -> Self {
        Self { builtin: None, file: None, name: Some(spec.name.clone()), offsets: Some(spec.offsets.clone()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Scalar on the consensus term.
    #[serde(default = "default_one")]
    pub gain: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { gain: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvoidanceSettings {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_one")]
    pub kp: f64,
    #[serde(default)]
    pub literal_branch: bool,
}

impl Default for AvoidanceSettings {
    fn default() -> Self {
        Self { enabled: true, b: 3.0, kp: 1.0, literal_branch: false }
    }
}

impl AvoidanceSettings {
    pub fn config(&self) -> AvoidanceConfig {
        AvoidanceConfig { literal_branch: self.literal_branch, ..AvoidanceConfig::with_range(self.b, self.kp) }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    /// Minimum slot separation for formations and initial positions.
    #[serde(default)]
    pub d_min: Option<f64>,
    /// Pairwise distance below which a violation is logged; defaults to `b / 2`.
    #[serde(default)]
    pub min_separation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKeyword {
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Position(Vec3),
    Keyword(TargetKeyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub region: RegionConfig,
    /// Must equal the agent count when given.
    #[serde(default)]
    pub n: Option<usize>,
    pub swath: f64,
    pub altitude: f64,
    pub target: TargetSpec,
    #[serde(default = "default_p_detect")]
    pub p_detect: f64,
    #[serde(default = "default_footprint")]
    pub footprint_radius: f64,
    #[serde(default = "default_accept")]
    pub accept_radius: f64,
}

impl MissionConfig {
    pub fn region(&self) -> SearchRegion {
        SearchRegion {
            origin: self.region.origin,
            width: self.region.width,
            height: self.region.height,
            altitude: self.altitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default)]
    pub max_ticks: Option<u64>,
    #[serde(default)]
    pub max_sim_time: Option<f64>,
    #[serde(default = "default_true")]
    pub mission_complete: bool,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self { max_ticks: None, max_sim_time: None, mission_complete: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryConfig {
    /// Record a snapshot every k ticks (the final tick is always recorded).
    #[serde(default = "default_every")]
    pub snapshot_every: u64,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self { snapshot_every: 1 }
    }
}

/// One schema or cross-reference problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioIssue {
    /// JSON path, e.g. `formations[1].offsets`.
    pub path: String,
    /// 1-based line in the source text, when it can be located.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", join_issues(.0))]
    Invalid(Vec<ScenarioIssue>),
}

fn join_issues(issues: &[ScenarioIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    pub fn issues(&self) -> &[ScenarioIssue] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Removes every `"_comment"` key, recursively.
pub fn strip_comments(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("_comment");
            map.values_mut().for_each(strip_comments);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_comments),
        _ => {}
    }
}

/// Best-effort line of the last named key in a JSON path.
fn locate(text: &str, path: &str) -> Option<usize> {
    let key = path
        .rsplit('.')
        .map(|seg| seg.split('[').next().unwrap_or(seg))
        .find(|seg| !seg.is_empty() && *seg != "?")?;
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// A validated scenario plus non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

/// Everything the engine needs, derived from a valid config.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub config: ScenarioConfig,
    pub topology: TopologyMatrix,
    pub leader: LeaderDesignation,
    pub formations: Vec<FormationSpec>,
    pub avoidance: Option<AvoidanceConfig>,
    pub min_separation: f64,
    pub d_min: f64,
    pub speed: SpeedFactor,
}

impl ResolvedScenario {
    pub fn formation(&self, name: &str) -> Option<&FormationSpec> {
        self.formations.iter().find(|f| f.name == name)
    }

    pub fn n(&self) -> usize {
        self.config.agents.count
    }
}

impl ScenarioConfig {
    /// Parses `text`; formation `file` references resolve against `base_dir`
    /// and are inlined into the returned config.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<LoadedScenario, ScenarioError> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        strip_comments(&mut value);
        let mut config: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::Invalid(vec![ScenarioIssue {
                line: locate(text, &path),
                message: e.inner().to_string(),
                path,
            }])
        })?;
        let mut issues = config.inline_formation_files(base_dir);
        if issues.is_empty() {
            if let Err(mut more) = config.resolve() {
                issues.append(&mut more);
            }
        }
        if !issues.is_empty() {
            for issue in &mut issues {
                issue.line = issue.line.or_else(|| locate(text, &issue.path));
            }
            return Err(ScenarioError::Invalid(issues));
        }
        let warnings = config.warnings();
        Ok(LoadedScenario { config, warnings })
    }

    fn inline_formation_files(&mut self, base_dir: &Path) -> Vec<ScenarioIssue> {
        let mut issues = Vec::new();
        for (k, f) in self.formations.iter_mut().enumerate() {
            let Some(file) = f.file.clone() else { continue };
            let path = base_dir.join(&file);
            let loaded = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| {
                    let mut v: serde_json::Value = serde_json::from_str(&t).map_err(|e| e.to_string())?;
                    strip_comments(&mut v);
                    serde_json::from_value::<FormationSpec>(v).map_err(|e| e.to_string())
                });
            match loaded {
                Ok(spec) => *f = FormationRef::inline(&spec),
                Err(e) => issues.push(ScenarioIssue {
                    path: format!("formations[{k}].file"),
                    line: None,
                    message: format!("{}: {e}", path.display()),
                }),
            }
        }
        issues
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn d_min(&self) -> f64 {
        self.safety.d_min.unwrap_or(1.0)
    }

    fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let InitialPositions::Positions(ps) = &self.agents.initial {
            let d_min = self.d_min();
            for a in 0..ps.len() {
                for b in a + 1..ps.len() {
                    let d = (ps[a] - ps[b]).norm();
                    if d < d_min {
                        out.push(format!(
                            "agents {} and {} start {d:.3} m apart (d_min {d_min})",
                            a + 1,
                            b + 1
                        ));
                    }
                }
            }
        }
        if self.stop.max_ticks.is_none() && self.stop.max_sim_time.is_none() {
            out.push("no tick or sim-time limit; headless runs will refuse to start".into());
        }
        out
    }

    /// Full validation; on success, the runtime view.
    pub fn resolve(&self) -> Result<ResolvedScenario, Vec<ScenarioIssue>> {
        let mut issues = Vec::new();
        let mut err = |path: &str, message: String| {
            issues.push(ScenarioIssue { path: path.to_string(), line: None, message });
        };
        let n = self.agents.count;

        if self.schema_version != SCHEMA_VERSION {
            err("schema_version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            err("dt", format!("dt must be positive, got {}", self.dt));
        }
        let speed = SpeedFactor::from_factor(self.speed_factor).unwrap_or_else(|e| {
            err("speed_factor", e);
            SpeedFactor::FreeRun
        });
        if n == 0 {
            err("agents.count", "at least one agent is required".into());
        }
        if !(self.agents.v_max > 0.0 && self.agents.v_max.is_finite()) {
            err("agents.v_max", format!("v_max must be positive, got {}", self.agents.v_max));
        }

        let d_min = self.d_min();
        if !(d_min >= 0.0 && d_min.is_finite()) {
            err("safety.d_min", format!("d_min must be non-negative, got {d_min}"));
        }

        // formation library
        let mut formations: Vec<FormationSpec> = Vec::new();
        let mut names = BTreeSet::new();
        for (k, f) in self.formations.iter().enumerate() {
            let path = format!("formations[{k}]");
            let spec = match (&f.builtin, &f.name, &f.offsets, &f.file) {
                (Some(b), None, None, None) => match builtin_formation(n, b) {
                    Some(s) => s,
                    None => {
                        let available: Vec<_> = builtin_formations(n).into_iter().map(|f| f.name).collect();
                        err(
                            &format!("{path}.builtin"),
                            if available.is_empty() {
                                format!("no built-in formations for {n} agents; give `name` and `offsets` instead")
                            } else {
                                format!("no built-in `{b}` for {n} agents (available: {})", available.join(", "))
                            },
                        );
                        continue;
                    }
                },
                (None, Some(name), Some(offsets), None) => FormationSpec::new(name.clone(), offsets.clone()),
                (None, _, _, Some(_)) => continue, // reported while inlining
                _ => {
                    err(&path, "give exactly one of `builtin`, `file`, or `name` + `offsets`".into());
                    continue;
                }
            };
            if spec.len() != n {
                err(
                    &format!("{path}.offsets"),
                    format!("formation `{}` has {} offsets but the scenario has {n} agents", spec.name, spec.len()),
                );
            }
            for problem in spec.check(d_min) {
                err(&format!("{path}.offsets"), format!("formation `{}`: {problem}", spec.name));
            }
            if !names.insert(spec.name.clone()) {
                err(&format!("{path}.name"), format!("duplicate formation name `{}`", spec.name));
            }
            formations.push(spec);
        }
        let known = |name: &str| formations.iter().any(|f| f.name == name);
        if let Some(name) = &self.initial_formation {
            if !known(name) {
                err("initial_formation", format!("unknown formation `{name}`"));
            }
        }

        match &self.agents.initial {
            InitialPositions::Positions(ps) => {
                if ps.len() != n {
                    err("agents.initial.positions", format!("{} positions for {n} agents", ps.len()));
                }
                if ps.iter().flatten().any(|c| !c.is_finite()) {
                    err("agents.initial.positions", "positions must be finite".into());
                }
            }
            InitialPositions::RandomCube { side, .. } => {
                if !(*side > 0.0 && side.is_finite()) {
                    err("agents.initial.random_cube.side", format!("side must be positive, got {side}"));
                }
            }
            InitialPositions::Formation { name, .. } => {
                if !known(name) {
                    err("agents.initial.formation.name", format!("unknown formation `{name}`"));
                }
            }
        }

        // topology
        let topology = match (&self.topology.preset, &self.topology.matrix) {
            (Some(p), None) if p == "chain" => match self.topology.fan_in {
                Some(k) if k >= 1 => Some(chain_topology(n, k)),
                _ => {
                    err("topology.fan_in", "chain preset needs fan_in >= 1".into());
                    None
                }
            },
            (Some(p), None) => {
                err("topology.preset", format!("unknown preset `{p}` (known: chain)"));
                None
            }
            (None, Some(rows)) => match TopologyMatrix::from_rows(rows) {
                Ok(m) if m.len() == n => Some(m),
                Ok(m) => {
                    err("topology.matrix", format!("{}x{} matrix for {n} agents", m.len(), m.len()));
                    None
                }
                Err(e) => {
                    err("topology.matrix", e);
                    None
                }
            },
            _ => {
                err("topology", "give either `preset` or `matrix`".into());
                None
            }
        };
        if self.topology.leader == 0 || self.topology.leader > n.max(1) {
            err("topology.leader", format!("leader must be in 1..={n}, got {}", self.topology.leader));
        }
        let leader = LeaderDesignation::new(self.topology.leader.saturating_sub(1));
        if let Some(t) = &topology {
            if self.topology.leader >= 1 && self.topology.leader <= n {
                for v in validate(t, leader) {
                    err("topology", v.to_string());
                }
            }
            let gain_step = self.control.gain * self.dt * t.max_weighted_in_degree();
            if gain_step >= 1.0 {
                err(
                    "control.gain",
                    format!("gain * dt * max in-degree = {gain_step:.3} must stay below 1 for a stable Euler step"),
                );
            }
        }
        if !(self.control.gain > 0.0 && self.control.gain.is_finite()) {
            err("control.gain", format!("gain must be positive, got {}", self.control.gain));
        }

        let avoidance_cfg = self.avoidance.config();
        if let Err(e) = avoidance_cfg.check() {
            err("avoidance", e);
        }
        let min_separation = self.safety.min_separation.unwrap_or(0.5 * self.avoidance.b);
        if !(min_separation >= 0.0 && min_separation.is_finite()) {
            err("safety.min_separation", format!("must be non-negative, got {min_separation}"));
        }

        if let Some(m) = &self.mission {
            if let Err(e) = m.region().check() {
                err("mission.region", e);
            }
            if !(m.swath > 0.0) {
                err("mission.swath", format!("swath must be positive, got {}", m.swath));
            }
            if !(m.p_detect > 0.0 && m.p_detect <= 1.0) {
                err("mission.p_detect", format!("p_detect must be in (0, 1], got {}", m.p_detect));
            }
            if !(m.footprint_radius > 0.0) {
                err("mission.footprint_radius", "footprint radius must be positive".into());
            }
            if !(m.accept_radius > 0.0) {
                err("mission.accept_radius", "accept radius must be positive".into());
            }
            if let Some(k) = m.n {
                if k != n {
                    err("mission.n", format!("mission is planned for {k} agents but the scenario has {n}"));
                }
            }
        }

        if let Some(t) = self.stop.max_sim_time {
            if !(t >= 0.0 && t.is_finite()) {
                err("stop.max_sim_time", format!("must be non-negative, got {t}"));
            }
        }
        if self.telemetry.snapshot_every == 0 {
            err("telemetry.snapshot_every", "must be at least 1".into());
        }

        if !issues.is_empty() {
            return Err(issues);
        }
        Ok(ResolvedScenario {
            config: self.clone(),
            topology: topology.expect("checked above"),
            leader,
            formations,
            avoidance: self.avoidance.enabled.then_some(avoidance_cfg),
            min_separation,
            d_min,
            speed,
        })
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    ScenarioConfig::from_json_str(&text, base)
}
