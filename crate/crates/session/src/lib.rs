//! Live session service: one engine ticking at a fixed rate, streamed to
//! WebSocket clients as full and delta state messages.

pub mod error;
pub mod protocol;
pub mod server;
pub mod session;

pub use error::SessionError;
pub use protocol::{ClientMessage, ClientMirror, ServerMessage, Snapshot, StateMessage, PROTOCOL_VERSION};
pub use server::{serve, ServerConfig, ServerHandle};
pub use session::{ConnId, Session};
