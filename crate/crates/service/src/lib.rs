//! JSON HTTP API over the dialogue engine.
//!
//! | route | body | answer |
//! |---|---|---|
//! | `POST /sessions` | [`api::CreateSession`] | 201, [`api::SessionCreated`] |
//! | `POST /sessions/{id}/messages` | [`api::PostMessage`] | [`api::MessageReply`] |
//! | `GET /sessions/{id}` | | [`api::Transcript`] |
//! | `GET /reports` | | [`api::ReportIndex`] |
//! | `GET /reports/{id}` | | a full metric report |
//! | `POST /coldstart/docs` | [`api::IngestDocs`] | [`api::IngestResult`] |
//! | `GET /health` | | [`api::Health`] |
//!
//! Failures answer with an [`api::ErrorBody`]. Turns of one session run one
//! at a time in arrival order; different sessions run in parallel on the
//! blocking pool.

pub mod api;
mod config;
mod state;

pub use config::{ServerConfig, ServiceConfig};
pub use state::{build_state, router, serve, AppState, SessionRecord};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Startup(String),
    #[error("snapshot {path}: {msg}")]
    Snapshot { path: String, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
