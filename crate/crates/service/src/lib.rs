//! WebSocket service for live excavation sessions.
//!
//! Each connection owns at most one session. Clients send JSON commands
//! ([`protocol::ClientMessage`]); the server answers with events, mesh deltas
//! and HUD state ([`protocol::ServerMessage`]).

pub mod catalog;
mod outbox;
pub mod protocol;
mod server;

pub use catalog::{Catalog, CatalogDirError, CATALOG_DIR_ENV};
pub use server::{bind, serve, STATE_MIN_INTERVAL, TICK_INTERVAL};
