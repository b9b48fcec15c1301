//! WebSocket gateway and command-line front end for [`swarmsim`].
//!
//! [`server::start`] runs a paced engine on its own thread and streams
//! decimated state over `/ws`; commands sent back are queued for the
//! engine's next tick boundary. [`driver::drive`] feeds a command script
//! through that socket. The `swarmsim` binary wraps both plus the headless
//! runner in [`cli`].

pub mod cli;
pub mod driver;
pub mod server;
pub mod wire;
