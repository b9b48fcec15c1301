//! Live gateway: a paced engine on its own thread behind a WebSocket.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use anyhow::{anyhow, Context};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use swarmsim::clock::SpeedFactor;
use swarmsim::command::SwarmCommand;
use swarmsim::engine::{precheck, CommandSender, Engine, SimError};
use swarmsim::runner::{Runner, StopCondition, StopReason};
use swarmsim::scenario::{LoadedScenario, ResolvedScenario};
use swarmsim::telemetry::{AssignmentRecord, EventPayload, TelemetryLog};
use tokio::sync::{broadcast, oneshot, watch};
use tower_http::services::ServeDir;

use crate::wire::{parse_client_frame, state_snapshot, ClientMessage, ServerMessage, WireSlot};

/// Default: every 5th tick, 10 Hz at `dt = 0.02`.
pub const DEFAULT_DECIMATION: u64 = 5;

/// Port used when neither `--port` nor the environment sets one.
pub const DEFAULT_PORT: u16 = 8750;

/// Environment variable holding the default port.
pub const PORT_ENV: &str = "SWARMSIM_PORT";

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: IpAddr,
    /// `0` picks a free port.
    pub port: u16,
    /// Console bundle served at `/` when the directory exists.
    pub static_dir: Option<PathBuf>,
    pub decimation: u64,
    /// Pacing override. Without it the scenario's factor is used, and a
    /// free-run scenario is paced at real time.
    pub speed: Option<f64>,
    pub log_path: Option<PathBuf>,
    /// Wait for a client `start` message before the first tick.
    pub hold: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            static_dir: None,
            decimation: DEFAULT_DECIMATION,
            speed: None,
            log_path: None,
            hold: false,
        }
    }
}

/// How the engine thread ended.
#[derive(Debug)]
pub struct RunSummary {
    pub log: TelemetryLog,
    pub reason: Option<StopReason>,
    pub halt: Option<SimError>,
}

struct Shared {
    scenario: Arc<ResolvedScenario>,
    commands: CommandSender,
    stream: broadcast::Sender<Arc<str>>,
    latest: watch::Receiver<Option<Arc<str>>>,
    tick: Arc<AtomicU64>,
    start: Mutex<Option<mpsc::Sender<()>>>,
    decimation: u64,
}

pub struct ServerHandle {
    pub addr: SocketAddr,
    commands: CommandSender,
    done: oneshot::Receiver<anyhow::Result<RunSummary>>,
    shutdown: Option<oneshot::Sender<()>>,
    http: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    /// Waits for the run to end, then stops the HTTP side.
    pub async fn wait(mut self) -> anyhow::Result<RunSummary> {
        let summary = (&mut self.done).await.map_err(|_| anyhow!("engine thread vanished"))?;
        self.stop_http().await;
        summary
    }

    /// Sends `stop` to the engine and waits for it.
    pub async fn shutdown(self) -> anyhow::Result<RunSummary> {
        self.commands.send(SwarmCommand::Stop);
        self.wait().await
    }

    async fn stop_http(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        // upgraded sockets may outlive graceful shutdown
        if tokio::time::timeout(std::time::Duration::from_secs(1), &mut self.http).await.is_err() {
            self.http.abort();
        }
    }
}

fn effective_speed(scenario: &ResolvedScenario, opt: Option<f64>) -> anyhow::Result<SpeedFactor> {
    Ok(match opt {
        Some(f) => SpeedFactor::from_factor(f).map_err(|e| anyhow!(e))?,
        None if scenario.speed == SpeedFactor::FreeRun => SpeedFactor::Scaled(1.0),
        None => scenario.speed,
    })
}

/// Binds the port, starts the engine thread and the HTTP/WebSocket server.
pub async fn start(scenario: LoadedScenario, options: ServeOptions) -> anyhow::Result<ServerHandle> {
    let resolved = Arc::new(
        scenario.config.resolve().map_err(|issues| {
            anyhow!(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))
        })?,
    );
    let speed = effective_speed(&resolved, options.speed)?;
    if options.decimation == 0 {
        return Err(anyhow!("decimation must be at least 1"));
    }
    let addr = SocketAddr::new(options.bind, options.port);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            anyhow!("port {} is busy; pick another with --port or {PORT_ENV}", options.port)
        } else {
            anyhow!("cannot listen on {addr}: {e}")
        }
    })?;
    let addr = listener.local_addr()?;

    let mut engine = Engine::with_warnings(&scenario.config, scenario.warnings.clone())?;
    engine.set_speed(speed);
    let commands = engine.command_sender();
    let (stream, _) = broadcast::channel(1024);
    let initial: Arc<str> = ServerMessage::StateSnapshot(state_snapshot(&engine)).to_line().into();
    let (latest_tx, latest) = watch::channel(Some(initial));
    let tick = Arc::new(AtomicU64::new(0));
    let (start_tx, start_rx) = if options.hold {
        let (tx, rx) = mpsc::channel();
        (Some(tx), Some(rx))
    } else {
        (None, None)
    };

    let shared = Arc::new(Shared {
        scenario: resolved.clone(),
        commands: commands.clone(),
        stream: stream.clone(),
        latest,
        tick: tick.clone(),
        start: Mutex::new(start_tx),
        decimation: options.decimation,
    });

    let (done_tx, done) = oneshot::channel();
    let until = StopCondition::from_config(&scenario.config);
    let decimation = options.decimation;
    let log_path = options.log_path.clone();
    std::thread::Builder::new().name("swarmsim-engine".into()).spawn(move || {
        if let Some(rx) = start_rx {
            let _ = rx.recv();
        }
        let result = drive_engine(engine, until, decimation, &stream, &latest_tx, &tick);
        let result = result.and_then(|summary| {
            if let Some(path) = &log_path {
                summary.log.save(path).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(summary)
        });
        let _ = done_tx.send(result);
    })?;

    let mut app = Router::new().route("/ws", get(ws_handler));
    app = match options.static_dir.filter(|d| d.is_dir()) {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(no_console)),
    };
    let app = app.with_state(shared);
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await;
    });
    Ok(ServerHandle { addr, commands, done, shutdown: Some(shutdown_tx), http })
}

/// Runs the scenario until it ends and serves it meanwhile.
pub async fn serve(scenario: LoadedScenario, options: ServeOptions) -> anyhow::Result<RunSummary> {
    let handle = start(scenario, options).await?;
    eprintln!("serving on http://{} (WebSocket {})", handle.addr, handle.ws_url());
    handle.wait().await
}

fn drive_engine(
    engine: Engine,
    until: Vec<StopCondition>,
    decimation: u64,
    stream: &broadcast::Sender<Arc<str>>,
    latest: &watch::Sender<Option<Arc<str>>>,
    tick: &AtomicU64,
) -> anyhow::Result<RunSummary> {
    let publish = |line: String| {
        let line: Arc<str> = line.into();
        let _ = stream.send(line);
    };
    let mut cursor = engine.log().len();
    let mut runner = Runner::new(engine, until);
    let outcome = runner.run_with(|e| {
        tick.store(e.tick(), Ordering::SeqCst);
        let events = e.log().events();
        for ev in &events[cursor.min(events.len())..] {
            if let EventPayload::Assignment(AssignmentRecord::Applied { seq, reconfiguration }) = &ev.payload {
                publish(
                    ServerMessage::Assignment {
                        tick: ev.tick,
                        seq: *seq,
                        formation: reconfiguration.formation.clone(),
                        mapping: reconfiguration
                            .mapping
                            .iter()
                            .map(|m| WireSlot { agent: m.agent + 1, slot: m.slot + 1 })
                            .collect(),
                        total_cost: reconfiguration.total_cost,
                    }
                    .to_line(),
                );
            }
        }
        cursor = events.len();
        if e.tick() % decimation == 0 {
            let line: Arc<str> = ServerMessage::StateSnapshot(state_snapshot(e)).to_line().into();
            let _ = latest.send(Some(line.clone()));
            let _ = stream.send(line);
        }
    });
    let (reason, halt) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e @ SimError::NonFinite { .. }) => (None, Some(e)),
        Err(e) => return Err(e.into()),
    };
    let mut engine = runner.into_engine();
    engine.finish()?;
    let final_tick = engine.tick();
    let last = ServerMessage::StateSnapshot(state_snapshot(&engine)).to_line();
    let _ = latest.send(Some(last.clone().into()));
    publish(last);
    let why = match (&reason, &halt) {
        (Some(StopReason::Stopped), _) => "stopped".to_string(),
        (Some(StopReason::Condition(c)), _) => c.to_string(),
        (None, Some(h)) => h.to_string(),
        (None, None) => "ended".to_string(),
    };
    publish(ServerMessage::RunEnded { tick: final_tick, reason: why }.to_line());
    Ok(RunSummary { log: engine.into_log()?, reason, halt })
}

async fn no_console() -> &'static str {
    "swarmsim gateway: no console bundle installed. The state stream is at /ws.\n"
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let (mut tx, mut rx) = socket.split();
    let mut stream = shared.stream.subscribe();
    let held = shared.start.lock().map(|s| s.is_some()).unwrap_or(false);
    let hello = ServerMessage::Hello {
        scenario: shared.scenario.config.name.clone(),
        agents: shared.scenario.n(),
        dt: shared.scenario.config.dt,
        formations: shared.scenario.formations.iter().map(|f| f.name.clone()).collect(),
        decimation: shared.decimation,
        held,
    };
    let mut greeting = hello.to_line();
    if let Some(line) = shared.latest.borrow().clone() {
        greeting.push_str(&line);
    }
    if tx.send(Message::Text(greeting.into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            incoming = rx.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let mut reply = String::new();
                for msg in parse_client_frame(text.as_str()) {
                    reply.push_str(&handle(&shared, msg).to_line());
                }
                if !reply.is_empty() && tx.send(Message::Text(reply.into())).await.is_err() {
                    return;
                }
            }
            out = stream.recv() => {
                match out {
                    Ok(line) => {
                        if tx.send(Message::Text(line.to_string().into())).await.is_err() {
                            return;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => return,
                }
            }
        }
    }
}

fn handle(shared: &Shared, msg: Result<ClientMessage, String>) -> ServerMessage {
    let tick = shared.tick.load(Ordering::SeqCst);
    match msg {
        Err(message) => ServerMessage::Error { id: None, message },
        Ok(ClientMessage::Start {}) => match shared.start.lock().ok().and_then(|mut s| s.take()) {
            Some(tx) => {
                let _ = tx.send(());
                ServerMessage::Started { tick }
            }
            None => ServerMessage::Error { id: None, message: "run already started".into() },
        },
        Ok(ClientMessage::Command { id, command, at_tick }) => {
            if let Err(message) = precheck(&shared.scenario, &command) {
                return ServerMessage::Error { id, message };
            }
            let queued = match at_tick {
                Some(t) => shared.commands.send_at(command.clone(), t),
                None => shared.commands.send(command.clone()),
            };
            if queued {
                ServerMessage::Ack { id, command, tick }
            } else {
                ServerMessage::Error { id, message: "run has ended".into() }
            }
        }
    }
}
