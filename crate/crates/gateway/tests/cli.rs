use std::path::{Path, PathBuf};

use swarmsim::telemetry::TelemetryLog;
use swarmsim_gateway::cli::{main_with, EXIT_DIVERGED, EXIT_USAGE};

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).to_string_lossy().into_owned()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("swarmsim").chain(args.iter().copied()))
}

#[test]
fn run_replay_export_round() {
    let dir = tempfile::tempdir().unwrap();
    let log: PathBuf = dir.path().join("t.swlog");
    assert_eq!(run(&["run", &scenario("tick_limit.json"), "--log", &path_str(&log)]), 0);
    let loaded = TelemetryLog::load(&log).unwrap();
    assert_eq!(loaded.snapshots().count(), 501);

    assert_eq!(run(&["replay", &path_str(&log)]), 0);

    let out = dir.path().join("z.tsv");
    assert_eq!(run(&["export", &path_str(&log), "--axis", "z", "--out", &path_str(&out)]), 0);
    let tsv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = tsv.lines().collect();
    assert_eq!(lines.len(), 502);
    assert_eq!(lines[0], "tick\tuav1\tuav2\tuav3\tuav4\tuav5\tuav6");
    assert_eq!(lines[1], "0\t10\t10\t10\t8\t6\t4");
}

#[test]
fn replay_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("t.swlog");
    assert_eq!(run(&["run", &scenario("tick_limit.json"), "--log", &path_str(&log), "--seed", "5"]), 0);
    let mut l = TelemetryLog::load(&log).unwrap();
    for e in l.events_mut().iter_mut().filter(|e| e.tick == 100) {
        if let swarmsim::telemetry::EventPayload::Snapshot(s) = &mut e.payload {
            s.agents[3].position.x += 0.5;
        }
    }
    l.save(&log).unwrap();
    assert_eq!(run(&["replay", &path_str(&log)]), EXIT_DIVERGED);
}

#[test]
fn exit_codes_reflect_outcome() {
    assert_eq!(run(&["run", &scenario("forced_collision.json")]), 2);
    assert_eq!(run(&["run", &scenario("cooperative_search.json")]), 0);
    assert_eq!(run(&["run", &scenario("cooperative_search.json"), "--seed", "3", "--speed", "0"]), 0);
}

#[test]
fn script_option() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("r.swlog");
    let code = run(&[
        "run",
        &scenario("six_uav_t_to_diamond.json"),
        "--script",
        &scenario("six_uav_t_to_diamond.commands.json"),
        "--log",
        &path_str(&log),
    ]);
    assert_eq!(code, 0);
    let l = TelemetryLog::load(&log).unwrap();
    assert_eq!(l.last_snapshot().unwrap().1.formation.as_deref(), Some("diamond"));
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["run", "/nonexistent.json"]), EXIT_USAGE);
    assert_eq!(run(&["export", "/nonexistent.swlog"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["run", &scenario("tick_limit.json"), "--speed=-1"]), EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "name": "x", "agents": {"count": 2, "initial": {"positions": [[0,0,0],[5,0,0]]}}, "topology": {"preset": "chain", "fan_in": 1}}"#).unwrap();
    // valid but unbounded
    assert_eq!(run(&["run", &path_str(&bad)]), EXIT_USAGE);
}
