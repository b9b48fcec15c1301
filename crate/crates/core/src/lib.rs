//! Deterministic lockstep simulator for leader-following UAV swarms.
//!
//! One [`engine::Engine`] advances every agent by the same fixed step. Agents
//! talk only through a topology-gated [`bus::SwarmBus`] with one tick of
//! latency, and every run is recorded to a [`telemetry::TelemetryLog`] that
//! can be replayed bit-for-bit.
//!
//! Agent ids are 0-based in the API and 1-based in topic names, scenario
//! files and exported curves.

pub mod assignment;
pub mod avoidance;
pub mod bus;
pub mod clock;
pub mod command;
pub mod dynamics;
pub mod engine;
pub mod formation;
pub mod headless;
pub mod mission;
pub mod replay;
pub mod runner;
pub mod scenario;
pub mod telemetry;
pub mod topology;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Tick = u64;
pub type AgentId = usize;
