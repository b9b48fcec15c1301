//! Replayable event log.
//!
//! # File layout (format version 1)
//!
//! ```text
//! magic      8 bytes   "SWRMLOG1"
//! header_len u32 LE
//! header     JSON      LogHeader
//! repeated:
//!   len      u32 LE
//!   event    MessagePack (named fields) SimEvent
//! ```
//!
//! Field order is fixed by the struct definitions, so identical event
//! streams serialize to identical bytes.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Reconfiguration;
use crate::bus::DeliveryRecord;
use crate::command::SwarmCommand;
use crate::mission::DetectionReport;
use crate::scenario::ScenarioConfig;
use crate::{AgentId, Tick, Vec3};

pub const MAGIC: &[u8; 8] = b"SWRMLOG1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub position: Vec3,
    pub velocity: Vec3,
    pub offset: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub agents: Vec<AgentSnapshot>,
    /// Formation the leader currently flies.
    pub formation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CommandOutcome {
    Accepted,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: SwarmCommand,
    pub outcome: CommandOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AssignmentRecord {
    Applied { seq: u64, reconfiguration: Reconfiguration },
    Rejected { formation: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// Two agents came closer than the configured separation.
    Separation { a: AgentId, b: AgentId, distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Notice {
    MissingNeighbor { agent: AgentId, neighbor: AgentId },
    CoincidentNeighbor { agent: AgentId, neighbor: AgentId },
    DegenerateAvoidance { agent: AgentId, neighbor: AgentId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventPayload {
    Snapshot(Snapshot),
    Command(CommandRecord),
    Delivery(DeliveryRecord),
    Assignment(AssignmentRecord),
    Violation(Violation),
    Detection(DetectionReport),
    Notice(Notice),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Snapshot,
    Command,
    Delivery,
    Assignment,
    Violation,
    Detection,
    Notice,
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            Self::Snapshot(_) => EventKind::Snapshot,
            Self::Command(_) => EventKind::Command,
            Self::Delivery(_) => EventKind::Delivery,
            Self::Assignment(_) => EventKind::Assignment,
            Self::Violation(_) => EventKind::Violation,
            Self::Detection(_) => EventKind::Detection,
            Self::Notice(_) => EventKind::Notice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub tick: Tick,
    pub seq: u64,
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub scenario_hash: String,
    pub seed: u64,
    pub dt: f64,
    pub snapshot_every: u64,
    pub scenario: ScenarioConfig,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event at tick {tick} ({kind:?}) recorded after tick {last_tick} ({last_kind:?})")]
    OutOfOrder {
        tick: Tick,
        kind: EventKind,
        last_tick: Tick,
        last_kind: EventKind,
    },
    #[error("not a swarm log (bad magic)")]
    BadMagic,
    #[error("unsupported log format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated log")]
    Truncated,
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("event encode: {0}")]
    Encode(#[from] rmp_serde::encode::Error),
    #[error("event decode: {0}")]
    Decode(#[from] rmp_serde::decode::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryLog {
    header: LogHeader,
    events: Vec<SimEvent>,
}

impl TelemetryLog {
    pub fn new(header: LogHeader) -> Self {
        Self { header, events: Vec::new() }
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_tick(&self) -> Option<Tick> {
        self.events.last().map(|e| e.tick)
    }

    /// Appends, enforcing `(tick, kind)` order. The sequence number is the
    /// event's position in the log.
    pub fn record(&mut self, tick: Tick, payload: EventPayload) -> Result<&SimEvent, LogError> {
        if let Some(last) = self.events.last() {
            let kind = payload.kind();
            let last_kind = last.payload.kind();
            if (tick, kind) < (last.tick, last_kind) {
                return Err(LogError::OutOfOrder { tick, kind, last_tick: last.tick, last_kind });
            }
        }
        let seq = self.events.len() as u64;
        self.events.push(SimEvent { tick, seq, payload });
        Ok(self.events.last().expect("just pushed"))
    }

    /// Inserts at the position `(tick, kind)` order requires and renumbers
    /// the events after it. Used for the closing snapshot of a run that
    /// stopped after other events of the same tick were already recorded.
    pub fn insert_ordered(&mut self, tick: Tick, payload: EventPayload) {
        let key = (tick, payload.kind());
        let at = self.events.partition_point(|e| (e.tick, e.payload.kind()) <= key);
        self.events.insert(at, SimEvent { tick, seq: at as u64, payload });
        for (k, e) in self.events.iter_mut().enumerate().skip(at + 1) {
            e.seq = k as u64;
        }
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (Tick, &Snapshot)> {
        self.events.iter().filter_map(|e| match &e.payload {
            EventPayload::Snapshot(s) => Some((e.tick, s)),
            _ => None,
        })
    }

    pub fn last_snapshot(&self) -> Option<(Tick, &Snapshot)> {
        self.snapshots().last()
    }

    pub fn commands(&self) -> impl Iterator<Item = (Tick, &CommandRecord)> {
        self.events.iter().filter_map(|e| match &e.payload {
            EventPayload::Command(c) => Some((e.tick, c)),
            _ => None,
        })
    }

    pub fn detections(&self) -> impl Iterator<Item = &DetectionReport> {
        self.events.iter().filter_map(|e| match &e.payload {
            EventPayload::Detection(d) => Some(d),
            _ => None,
        })
    }

    pub fn violations(&self) -> impl Iterator<Item = (Tick, &Violation)> {
        self.events.iter().filter_map(|e| match &e.payload {
            EventPayload::Violation(v) => Some((e.tick, v)),
            _ => None,
        })
    }

    pub fn assignments(&self) -> impl Iterator<Item = (Tick, &AssignmentRecord)> {
        self.events.iter().filter_map(|e| match &e.payload {
            EventPayload::Assignment(a) => Some((e.tick, a)),
            _ => None,
        })
    }

    /// Direct mutable access for tooling and tests that forge logs.
    pub fn events_mut(&mut self) -> &mut Vec<SimEvent> {
        &mut self.events
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        w.write_all(MAGIC)?;
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for ev in &self.events {
            let body = rmp_serde::to_vec_named(ev)?;
            w.write_all(&(body.len() as u32).to_le_bytes())?;
            w.write_all(&body)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LogError> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LogError> {
        Self::read_from(bytes)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LogError> {
        let mut magic = [0u8; 8];
        read_exact_or_truncated(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(LogError::BadMagic);
        }
        let header_len = read_len(&mut r)?.ok_or(LogError::Truncated)?;
        let mut header = vec![0u8; header_len];
        read_exact_or_truncated(&mut r, &mut header)?;
        let header: LogHeader = serde_json::from_slice(&header)?;
        if header.format_version != FORMAT_VERSION {
            return Err(LogError::UnsupportedVersion(header.format_version));
        }
        let mut events = Vec::new();
        while let Some(len) = read_len(&mut r)? {
            let mut body = vec![0u8; len];
            read_exact_or_truncated(&mut r, &mut body)?;
            events.push(rmp_serde::from_slice(&body)?);
        }
        Ok(Self { header, events })
    }

    pub fn save(&self, path: &Path) -> Result<(), LogError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LogError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), LogError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => LogError::Truncated,
        _ => LogError::Io(e),
    })
}

/// `None` on clean end of stream.
fn read_len<R: Read>(r: &mut R) -> Result<Option<usize>, LogError> {
    let mut buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut buf[got..])?;
        if n == 0 {
            return if got == 0 { Ok(None) } else { Err(LogError::Truncated) };
        }
        got += n;
    }
    Ok(Some(u32::from_le_bytes(buf) as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(format!("unknown axis `{other}`, expected x, y or z")),
        }
    }
}

/// One coordinate per agent per logged tick.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub axis: Axis,
    pub agents: usize,
    pub rows: Vec<(Tick, Vec<f64>)>,
}

/// Position-response curves along `axis` from every logged snapshot.
pub fn export_curves(log: &TelemetryLog, axis: Axis) -> CurveTable {
    let k = axis.index();
    let rows: Vec<(Tick, Vec<f64>)> = log
        .snapshots()
        .map(|(tick, s)| (tick, s.agents.iter().map(|a| a.position[k]).collect()))
        .collect();
    let agents = rows.first().map_or(0, |r| r.1.len());
    CurveTable { axis, agents, rows }
}

impl CurveTable {
    /// Tab-separated: a `tick uav1 .. uavN` header line, then one line per
    /// tick. Values print in shortest round-trip form.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("tick");
        for a in 0..self.agents {
            let _ = write!(out, "\tuav{}", a + 1);
        }
        out.push('\n');
        for (tick, values) in &self.rows {
            let _ = write!(out, "{tick}");
            for v in values {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, axis: Axis) -> Result<Self, String> {
        let mut lines = text.lines();
        let head = lines.next().ok_or("empty table")?;
        let agents = head.split('\t').count().saturating_sub(1);
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut cols = line.split('\t');
            let tick = cols
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| format!("line {}: bad tick", n + 2))?;
            let values = cols
                .map(|c| c.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 2)))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != agents {
                return Err(format!("line {}: {} values for {agents} agents", n + 2, values.len()));
            }
            rows.push((tick, values));
        }
        Ok(Self { axis, agents, rows })
    }

    pub fn series(&self, agent: AgentId) -> Vec<(Tick, f64)> {
        self.rows.iter().map(|(t, v)| (*t, v[agent])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettlingReport {
    pub initial: f64,
    pub target: f64,
    /// First tick after which the curve stays within the band for good.
    pub settled_at: Option<Tick>,
    /// Largest excursion past the target, as a percentage of the step
    /// `|target - initial|`. Zero for a step smaller than the band.
    pub overshoot_pct: f64,
}

impl SettlingReport {
    pub fn settled(&self) -> bool {
        self.settled_at.is_some()
    }
}

/// Settling and overshoot of one curve against `target` with band `±tol`.
pub fn settling(series: &[(Tick, f64)], target: f64, tol: f64) -> SettlingReport {
    let initial = series.first().map_or(target, |s| s.1);
    let settled_at = match series.iter().rposition(|(_, v)| (v - target).abs() > tol) {
        None => series.first().map(|s| s.0),
        Some(last_out) => series.get(last_out + 1).map(|s| s.0),
    };
    let step = target - initial;
    let overshoot_pct = if step.abs() <= tol {
        0.0
    } else {
        let dir = step.signum();
        let worst = series.iter().map(|(_, v)| (v - target) * dir).fold(0.0, f64::max);
        100.0 * worst / step.abs()
    };
    SettlingReport { initial, target, settled_at, overshoot_pct }
}
