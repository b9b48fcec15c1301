//! Starts a held gateway on a free port, drives it with the T to diamond
//! command script over WebSocket, and prints what came back.

use std::path::Path;

use swarmsim::command::CommandScript;
use swarmsim::scenario::load_scenario;
use swarmsim_gateway::driver::drive;
use swarmsim_gateway::server::{start, ServeOptions};
use swarmsim_gateway::wire::ServerMessage;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let scenario = load_scenario(&dir.join("six_uav_t_to_diamond.json"))?;
    let script = CommandScript::load(&dir.join("six_uav_t_to_diamond.commands.json")).map_err(anyhow::Error::msg)?;

    // speed 0 runs free; decimation 50 keeps the transcript short
    let options = ServeOptions { port: 0, hold: true, speed: Some(0.0), decimation: 50, ..Default::default() };
    let server = start(scenario, options).await?;
    println!("serving {}", server.ws_url());

    let transcript = drive(&server.ws_url(), &script).await?;
    let summary = server.wait().await?;

    for m in &transcript.messages {
        match m {
            ServerMessage::StateSnapshot(s) if s.tick % 500 == 0 => {
                println!("tick {:>5}  {:<8} error {:.4}", s.tick, s.formation.as_deref().unwrap_or("-"), s.formation_error.unwrap_or(f64::NAN))
            }
            ServerMessage::StateSnapshot(_) => {}
            other => println!("{}", serde_json::to_string(other)?),
        }
    }
    println!("{} events logged, {} snapshots streamed", summary.log.len(), transcript.states().count());
    Ok(())
}
