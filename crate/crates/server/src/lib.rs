//! A simulated time tagger and function generator on TCP port 8471.
//!
//! Each connection gets its own session. After `CONFIG` loads a scenario,
//! `START` streams the seeded simulation's tag records for the channels
//! chosen with `SUBSCRIBE`.

pub mod client;
pub mod protocol;
pub mod server;
pub mod session;

pub use client::{Capture, Client};
pub use protocol::{
    parse_command, Command, ErrorCode, ProtocolError, DEFAULT_PORT, END_CHANNEL, OVERFLOW_CHANNEL, QUEUE_CAPACITY,
    RESPONSE_CHANNEL,
};
pub use server::{handle_connection, Server, ServerConfig};
pub use session::{Frame, Pacing, RunState, Session};
