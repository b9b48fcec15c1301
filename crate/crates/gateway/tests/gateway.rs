use std::path::{Path, PathBuf};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use swarmsim::command::{CommandScript, SwarmCommand};
use swarmsim::headless::{run_headless, HeadlessOptions};
use swarmsim::scenario::{load_scenario, LoadedScenario, ScenarioConfig};
use swarmsim::telemetry::CommandOutcome;
use swarmsim::Vec3;
use swarmsim_gateway::driver::drive;
use swarmsim_gateway::server::{start, ServeOptions};
use swarmsim_gateway::wire::{ClientMessage, ServerMessage, StateSnapshot};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped(name: &str) -> LoadedScenario {
    load_scenario(&scenarios().join(name)).unwrap()
}

fn inline(text: &str) -> LoadedScenario {
    ScenarioConfig::from_json_str(text, Path::new(".")).unwrap()
}

fn opts(speed: f64) -> ServeOptions {
    ServeOptions { port: 0, speed: Some(speed), ..Default::default() }
}

/// Open-ended 6-UAV T hold, no stop limit.
fn open_ended(avoidance: bool) -> LoadedScenario {
    inline(&format!(
        r#"{{"schema_version": 1, "name": "open",
            "agents": {{"count": 6, "initial": {{"formation": {{"name": "T", "leader_position": [0,0,10]}}}}}},
            "topology": {{"matrix": [[0,0,0,0,0,0],[1,0,0,0,0,0],[1,1,0,0,0,0],[0,1,1,0,0,0],[0,0,1,1,0,0],[0,0,0,1,1,0]]}},
            "formations": [{{"builtin": "T"}}, {{"builtin": "diamond"}}],
            "initial_formation": "T",
            "avoidance": {{"enabled": {avoidance}, "b": 1.5}}}}"#
    ))
}

async fn connect(url: &str) -> Ws {
    tokio_tungstenite::connect_async(url).await.unwrap().0
}

async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::Text(format!("{}\n", serde_json::to_string(msg).unwrap()).into())).await.unwrap();
}

/// Next batch of server messages, or empty on timeout.
async fn recv(ws: &mut Ws, wait: Duration) -> Vec<ServerMessage> {
    match tokio::time::timeout(wait, ws.next()).await {
        Ok(Some(Ok(Message::Text(t)))) => t.lines().map(|l| serde_json::from_str(l).unwrap()).collect(),
        Ok(Some(Ok(_))) => Vec::new(),
        Ok(other) => panic!("socket ended: {other:?}"),
        Err(_) => Vec::new(),
    }
}

/// Reads until `pred` matches a message, returning everything read.
async fn read_until(ws: &mut Ws, pred: impl Fn(&ServerMessage) -> bool) -> Vec<ServerMessage> {
    let mut all = Vec::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(20);
    while tokio::time::Instant::now() < deadline {
        let batch = recv(ws, Duration::from_millis(200)).await;
        let hit = batch.iter().any(&pred);
        all.extend(batch);
        if hit {
            return all;
        }
    }
    panic!("timed out; got {} messages", all.len());
}

fn states(msgs: &[ServerMessage]) -> Vec<&StateSnapshot> {
    msgs.iter()
        .filter_map(|m| match m {
            ServerMessage::StateSnapshot(s) => Some(s),
            _ => None,
        })
        .collect()
}

fn command(command: SwarmCommand) -> ClientMessage {
    ClientMessage::Command { id: Some(1), command, at_tick: None }
}

#[tokio::test(flavor = "multi_thread")]
async fn hello_then_snapshot() {
    let server = start(open_ended(true), opts(5.0)).await.unwrap();
    let mut ws = connect(&server.ws_url()).await;
    let first = recv(&mut ws, Duration::from_secs(5)).await;
    assert!(matches!(&first[0], ServerMessage::Hello { agents: 6, decimation: 5, held: false, .. }), "{first:?}");
    assert!(matches!(&first[1], ServerMessage::StateSnapshot(_)));
    let more = read_until(&mut ws, |m| matches!(m, ServerMessage::StateSnapshot(s) if s.tick >= 20)).await;
    let ticks: Vec<_> = states(&more).iter().map(|s| s.tick).collect();
    assert!(ticks.iter().all(|t| t % 5 == 0), "{ticks:?}");
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_freezes_and_resume_continues() {
    let server = start(open_ended(true), opts(10.0)).await.unwrap();
    let mut ws = connect(&server.ws_url()).await;
    let mut seen = read_until(&mut ws, |m| matches!(m, ServerMessage::StateSnapshot(s) if s.tick >= 10)).await;

    send(&mut ws, &command(SwarmCommand::Pause)).await;
    seen.extend(read_until(&mut ws, |m| matches!(m, ServerMessage::Ack { .. })).await);
    // let in-flight snapshots drain
    tokio::time::sleep(Duration::from_millis(300)).await;
    while let batch @ [_, ..] = &recv(&mut ws, Duration::from_millis(100)).await[..] {
        seen.extend(batch.iter().cloned());
    }
    let acked = seen.iter().find_map(|m| match m {
        ServerMessage::Ack { tick, .. } => Some(*tick),
        _ => None,
    });
    let frozen = states(&seen).iter().map(|s| s.tick).chain(acked).max().unwrap();
    let quiet = recv(&mut ws, Duration::from_millis(400)).await;
    assert!(states(&quiet).is_empty(), "stream moved while paused: {quiet:?}");

    send(&mut ws, &command(SwarmCommand::Resume)).await;
    let after = read_until(&mut ws, |m| matches!(m, ServerMessage::StateSnapshot(s) if s.tick > frozen)).await;
    let next = states(&after).into_iter().find(|s| s.tick > frozen).unwrap();
    assert!(next.tick <= frozen + 5 + 5, "jumped from {frozen} to {}", next.tick);

    let summary = server.shutdown().await.unwrap();
    let cmds: Vec<_> = summary.log.commands().map(|(t, c)| (t, c.command.clone())).collect();
    assert_eq!(cmds[0].1, SwarmCommand::Pause);
    assert_eq!(cmds[1].1, SwarmCommand::Resume);
    assert_eq!(cmds[0].0, cmds[1].0, "resume must land on the paused tick");
}

#[tokio::test(flavor = "multi_thread")]
async fn set_formation_assignment_within_two_ticks() {
    let server = start(shipped("nine_uav_reconfiguration.json"), opts(5.0)).await.unwrap();
    let mut ws = connect(&server.ws_url()).await;
    read_until(&mut ws, |m| matches!(m, ServerMessage::StateSnapshot(s) if s.tick >= 10)).await;
    send(&mut ws, &command(SwarmCommand::SetFormation { name: "pyramid".into() })).await;
    let msgs = read_until(&mut ws, |m| matches!(m, ServerMessage::Assignment { formation, .. } if formation == "pyramid")).await;
    let acked = msgs
        .iter()
        .find_map(|m| match m {
            ServerMessage::Ack { tick, .. } => Some(*tick),
            _ => None,
        })
        .unwrap();
    let assigned = msgs
        .iter()
        .find_map(|m| match m {
            ServerMessage::Assignment { tick, mapping, .. } => {
                assert_eq!(mapping.len(), 9);
                assert_eq!((mapping[0].agent, mapping[0].slot), (1, 1));
                Some(*tick)
            }
            _ => None,
        })
        .unwrap();
    assert!(assigned >= acked && assigned - acked <= 2, "ack at {acked}, assignment at {assigned}");
    server.shutdown().await.unwrap();
}

/// Steady lag behind a leader moving at `v` for the 6-UAV matrix, without
/// avoidance: each follower solves sum_j (y_i - y_j) = -v / gain over its
/// in-neighbours, where y is the position error in the leader frame.
fn steady_lag(v: f64, gain: f64) -> Vec<f64> {
    let inn: [&[usize]; 6] = [&[], &[0], &[0, 1], &[1, 2], &[2, 3], &[3, 4]];
    let mut y = vec![0.0; 6];
    for i in 1..6 {
        let s: f64 = inn[i].iter().map(|&j| y[j]).sum();
        y[i] = (s - v / gain) / inn[i].len() as f64;
    }
    y
}

#[tokio::test(flavor = "multi_thread")]
async fn leader_velocity_moves_leader_and_formation_holds() {
    let lag = steady_lag(1.0, 1.0);
    let bound = lag.iter().cloned().fold(0.0, f64::max) - lag.iter().cloned().fold(0.0, f64::min);
    assert!((bound - 2.125).abs() < 1e-12);

    let server = start(open_ended(false), opts(20.0)).await.unwrap();
    let mut ws = connect(&server.ws_url()).await;
    send(&mut ws, &command(SwarmCommand::LeaderVelocity { velocity: Vec3::new(1.0, 0.0, 0.0) })).await;
    let msgs = read_until(&mut ws, |m| matches!(m, ServerMessage::StateSnapshot(s) if s.sim_time >= 10.0)).await;
    let acked = msgs.iter().find_map(|m| match m {
        ServerMessage::Ack { tick, .. } => Some(*tick),
        _ => None,
    });
    let acked = acked.unwrap();
    let moving: Vec<_> = states(&msgs).into_iter().filter(|s| s.tick > acked + 2).collect();
    assert!(moving.len() > 10);
    for w in moving.windows(2) {
        assert!(w[1].agents[0].position[0] > w[0].agents[0].position[0]);
    }
    // one tick of bus latency lets the lag exceed the continuous-time value by about v * dt per hop
    let tol = 5.0 * 1.0 * 0.02;
    for s in &moving {
        let e = s.formation_error.unwrap();
        assert!(e <= bound + tol, "tick {}: error {e} over {bound}", s.tick);
    }
    let last = moving.last().unwrap();
    assert!((last.formation_error.unwrap() - bound).abs() < 0.2, "{:?}", last.formation_error);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_and_invalid_commands_get_errors() {
    let server = start(open_ended(true), opts(10.0)).await.unwrap();
    let mut ws = connect(&server.ws_url()).await;
    ws.send(Message::Text("{\"kind\":\"command\",\"command\":{\"type\":\"warp\"}}\n".into())).await.unwrap();
    let msgs = read_until(&mut ws, |m| matches!(m, ServerMessage::Error { .. })).await;
    assert!(msgs.iter().any(|m| matches!(m, ServerMessage::Error { id: None, message } if message.contains("malformed"))));

    send(&mut ws, &ClientMessage::Command { id: Some(9), command: SwarmCommand::SetFormation { name: "hexagon".into() }, at_tick: None }).await;
    let msgs = read_until(&mut ws, |m| matches!(m, ServerMessage::Error { .. })).await;
    assert!(msgs.iter().any(|m| matches!(m, ServerMessage::Error { id: Some(9), message } if message.contains("hexagon"))));

    send(&mut ws, &command(SwarmCommand::SetSpeed { factor: -3.0 })).await;
    read_until(&mut ws, |m| matches!(m, ServerMessage::Error { id: Some(1), .. })).await;

    send(&mut ws, &ClientMessage::Start {}).await;
    read_until(&mut ws, |m| matches!(m, ServerMessage::Error { message, .. } if message.contains("already"))).await;

    // still running
    let before = read_until(&mut ws, |m| matches!(m, ServerMessage::StateSnapshot(_))).await;
    let t0 = states(&before).last().unwrap().tick;
    read_until(&mut ws, |m| matches!(m, ServerMessage::StateSnapshot(s) if s.tick > t0)).await;
    let summary = server.shutdown().await.unwrap();
    assert!(summary.log.commands().all(|(_, c)| c.command == SwarmCommand::Stop));
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_driver_matches_headless_log() {
    let scenario = shipped("six_uav_t_to_diamond.json");
    let script = CommandScript::load(&scenarios().join("six_uav_t_to_diamond.commands.json")).unwrap();

    let headless = run_headless(&scenario, &HeadlessOptions { script: Some(script.clone()), ..Default::default() }).unwrap();

    let server = start(scenario, ServeOptions { hold: true, ..opts(0.0) }).await.unwrap();
    let transcript = drive(&server.ws_url(), &script).await.unwrap();
    let summary = server.wait().await.unwrap();

    assert!(matches!(transcript.messages.last(), Some(ServerMessage::RunEnded { .. })));
    assert!(transcript.messages.iter().any(|m| matches!(m, ServerMessage::Assignment { formation, .. } if formation == "diamond")));
    assert_eq!(summary.log.commands().map(|(t, _)| t).collect::<Vec<_>>(), vec![1500]);
    assert!(summary.log.commands().all(|(_, c)| c.outcome == CommandOutcome::Accepted));
    assert_eq!(summary.log.to_bytes().unwrap(), headless.log.to_bytes().unwrap());
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn serves_console_bundle_when_present() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>console</h1>").unwrap();
    let server = start(open_ended(true), ServeOptions { static_dir: Some(dir.path().into()), ..opts(1.0) }).await.unwrap();
    let page = http_get(server.addr, "/").await;
    assert!(page.starts_with("HTTP/1.1 200"), "{page}");
    assert!(page.contains("<h1>console</h1>"));
    server.shutdown().await.unwrap();

    let server = start(open_ended(true), opts(1.0)).await.unwrap();
    let page = http_get(server.addr, "/").await;
    assert!(page.contains("no console bundle"), "{page}");
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn busy_port_is_diagnosed() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let err = start(open_ended(true), ServeOptions { port, ..opts(1.0) }).await.err().unwrap();
    assert!(err.to_string().contains(&format!("port {port} is busy")), "{err}");
}
