//! Live steering of a running testbed by console clients.

pub mod pace;
pub mod protocol;
pub mod server;

pub use server::{spawn, ServeOptions, Server, ServerError, CONTROL_PATH, DEFAULT_ENDPOINT};
