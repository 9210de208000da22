//! Operational shell around `robbins-core`: the `robbins` command line and
//! an HTTP host for the timed selection game, with an append-only session
//! store.

pub mod app;
pub mod cli;
pub mod config;
pub mod error;
pub mod stats;
pub mod store;

pub use app::{router, serve, AppState};
pub use config::ServiceConfig;
pub use error::ServiceError;
