//! A paced run at 4x with commands sent from another thread while it goes:
//! pause, resume, double the speed, switch formation, stop.

use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use swarmsim::command::SwarmCommand;
use swarmsim::engine::Engine;
use swarmsim::runner::{Runner, StopCondition};
use swarmsim::scenario::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/six_uav_t_to_diamond.json");
    let mut config = load_scenario(&path)?.config;
    config.speed_factor = 4.0;
    let engine = Engine::new(&config)?;
    let tx = engine.command_sender();

    let operator = thread::spawn(move || {
        let plan = [
            (300, SwarmCommand::Pause),
            (600, SwarmCommand::Resume),
            (200, SwarmCommand::SetSpeed { factor: 8.0 }),
            (100, SwarmCommand::SetFormation { name: "diamond".into() }),
            (1200, SwarmCommand::Stop),
        ];
        for (ms, c) in plan {
            thread::sleep(Duration::from_millis(ms));
            println!("  -> {c:?}");
            tx.send(c);
        }
    });

    let start = Instant::now();
    let mut runner = Runner::new(engine, vec![StopCondition::SimTime(60.0)]);
    let reason = runner.run_with(|e| {
        if e.tick() % 100 == 0 {
            println!("tick {:>5}  wall {:>6.2?}  error {:.3}", e.tick(), start.elapsed(), e.world().formation_error().unwrap_or(f64::NAN));
        }
    })?;
    operator.join().expect("operator thread");

    let log = runner.into_log()?;
    println!("stopped: {reason:?}");
    for (tick, c) in log.commands() {
        println!("logged at tick {tick}: {:?} {:?}", c.command, c.outcome);
    }
    Ok(())
}
