//! Replays a command script into a running gateway.

use anyhow::{anyhow, bail};
use futures_util::{SinkExt, StreamExt};
use swarmsim::command::CommandScript;
use tokio_tungstenite::tungstenite::Message;

use crate::wire::{ClientMessage, ServerMessage};

/// Everything the server said during a driven run.
#[derive(Debug, Default)]
pub struct Transcript {
    pub messages: Vec<ServerMessage>,
}

impl Transcript {
    pub fn states(&self) -> impl Iterator<Item = &crate::wire::StateSnapshot> {
        self.messages.iter().filter_map(|m| match m {
            ServerMessage::StateSnapshot(s) => Some(s),
            _ => None,
        })
    }
}

async fn next_text<S>(rx: &mut S) -> anyhow::Result<String>
where
    S: futures_util::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        match rx.next().await {
            Some(Ok(Message::Text(t))) => return Ok(t.to_string()),
            Some(Ok(Message::Close(_))) | None => return Err(anyhow!("connection closed")),
            Some(Ok(_)) => continue,
            Some(Err(e)) => return Err(e.into()),
        }
    }
}

/// Connects to `url`, sends every scripted command with its tick as
/// `at_tick`, waits for all acks, sends `start` if the server is held, and
/// then reads until `run_ended`.
pub async fn drive(url: &str, script: &CommandScript) -> anyhow::Result<Transcript> {
    let (ws, _) = tokio_tungstenite::connect_async(url).await?;
    let (mut tx, mut rx) = ws.split();
    let mut transcript = Transcript::default();
    let mut held = None;
    let mut acks = 0;
    let mut frame = String::new();
    for (k, c) in script.commands.iter().enumerate() {
        let msg = ClientMessage::Command { id: Some(k as u64), command: c.command.clone(), at_tick: Some(c.tick) };
        frame.push_str(&serde_json::to_string(&msg)?);
        frame.push('\n');
    }
    if !frame.is_empty() {
        tx.send(Message::Text(frame.into())).await?;
    }
    let mut started = false;
    loop {
        let text = next_text(&mut rx).await?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let msg: ServerMessage = serde_json::from_str(line)?;
            match &msg {
                ServerMessage::Hello { held: h, .. } => held = Some(*h),
                ServerMessage::Ack { .. } => acks += 1,
                ServerMessage::Error { id, message } => bail!("command {id:?} rejected: {message}"),
                _ => {}
            }
            let ended = matches!(msg, ServerMessage::RunEnded { .. });
            transcript.messages.push(msg);
            if ended {
                return Ok(transcript);
            }
        }
        if !started && acks == script.commands.len() && held.is_some() {
            started = true;
            if held == Some(true) {
                tx.send(Message::Text(format!("{}\n", serde_json::to_string(&ClientMessage::Start {})?).into())).await?;
            }
        }
    }
}
