//! HTTP API and command-line plumbing around the geoqa engine.

pub mod api;
pub mod config;
pub mod eval;

pub use api::{router, serve, AppState, QueryRequest};
pub use config::{Config, Mode};
