//! The `swarmsim` command line.

use std::ffi::OsString;
use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use swarmsim::command::CommandScript;
use swarmsim::headless::{run_headless, HeadlessError, HeadlessOptions};
use swarmsim::replay::replay;
use swarmsim::scenario::load_scenario;
use swarmsim::telemetry::{export_curves, Axis, TelemetryLog};

use crate::server::{serve, ServeOptions, DEFAULT_DECIMATION, DEFAULT_PORT, PORT_ENV};

/// Bad arguments, unreadable or invalid input files.
pub const EXIT_USAGE: i32 = 64;
/// `replay` found a divergence.
pub const EXIT_DIVERGED: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "swarmsim", version, about = "Deterministic UAV swarm simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario headless and write its log.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sim seconds per wall second; 0 or absent runs free.
        #[arg(long)]
        speed: Option<f64>,
        /// JSON command script (tick -> command).
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Run a scenario paced and expose it over WebSocket.
    Serve {
        scenario: PathBuf,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Console bundle to serve at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Stream every k-th tick.
        #[arg(long, default_value_t = DEFAULT_DECIMATION)]
        decimation: u64,
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Do not tick until a client sends `start`.
        #[arg(long)]
        hold: bool,
    },
    /// Re-execute a log and compare snapshots.
    Replay { log: PathBuf },
    /// Print position-response curves as tab-separated text.
    Export {
        log: PathBuf,
        #[arg(long, default_value = "z")]
        axis: Axis,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match cli.command {
        Command::Run { scenario, log, seed, speed, script } => cmd_run(&scenario, log, seed, speed, script.as_deref()),
        Command::Serve { scenario, port, bind, static_dir, decimation, speed, log, hold } => {
            let options = ServeOptions { bind, port, static_dir, decimation, speed, log_path: log, hold };
            cmd_serve(&scenario, options)
        }
        Command::Replay { log } => cmd_replay(&log),
        Command::Export { log, axis, out } => cmd_export(&log, axis, out.as_deref()),
    }
}

fn cmd_run(path: &Path, log: Option<PathBuf>, seed: Option<u64>, speed: Option<f64>, script: Option<&Path>) -> i32 {
    let scenario = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => return usage(format!("{}: {e}", path.display())),
    };
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    let script = match script.map(CommandScript::load).transpose() {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let options = HeadlessOptions { seed, speed, script, log_path: log.clone() };
    match run_headless(&scenario, &options) {
        Ok(out) => {
            if let Some(h) = &out.halt {
                eprintln!("error: {h}");
            }
            let (tick, _) = out.log.last_snapshot().expect("runs always log a snapshot");
            eprintln!(
                "{}: {} ticks, {} events, {} violations, {}",
                scenario.config.name,
                tick,
                out.log.len(),
                out.log.violations().count(),
                out.status
            );
            if let Some(d) = out.log.detections().next() {
                eprintln!("target detected by uav{} at tick {}", d.detector + 1, d.tick);
            }
            if let Some(p) = &log {
                eprintln!("log written to {}", p.display());
            }
            out.status.code()
        }
        Err(e @ (HeadlessError::Unbounded | HeadlessError::Option(_))) => usage(e.to_string()),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_serve(path: &Path, options: ServeOptions) -> i32 {
    let scenario = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => return usage(format!("{}: {e}", path.display())),
    };
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    match rt.block_on(serve(scenario, options)) {
        Ok(summary) => match summary.halt {
            Some(h) => {
                eprintln!("error: {h}");
                1
            }
            None => 0,
        },
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn cmd_replay(path: &Path) -> i32 {
    let log = match TelemetryLog::load(path) {
        Ok(l) => l,
        Err(e) => return usage(format!("{}: {e}", path.display())),
    };
    match replay(&log) {
        Ok(report) => {
            println!("{report}");
            if report.is_clean() {
                0
            } else {
                EXIT_DIVERGED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_export(path: &Path, axis: Axis, out: Option<&Path>) -> i32 {
    let log = match TelemetryLog::load(path) {
        Ok(l) => l,
        Err(e) => return usage(format!("{}: {e}", path.display())),
    };
    let tsv = export_curves(&log, axis).to_tsv();
    let written = match out {
        Some(p) => std::fs::write(p, tsv),
        None => std::io::stdout().lock().write_all(tsv.as_bytes()),
    };
    match written {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn usage(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    EXIT_USAGE
}
