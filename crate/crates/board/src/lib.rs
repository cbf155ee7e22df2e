//! Scenario-oriented evaluation: simulated datasets, scenarios bound to a
//! dataset window, leaderboards built by running plugins through the
//! controller and scoring their payloads, and the REST API serving all of it.
//!
//! Leaderboards are versioned. Adding an algorithm evaluates only the new
//! plugin on the board's retained dataset window (checked by content hash)
//! and leaves existing rows untouched. Failed runs stay visible as failed
//! rows.

pub mod api;
pub mod backend;
pub mod board;
pub mod dataset;
pub mod error;
pub mod service;
pub mod store;

pub use backend::PluginBackend;
pub use board::{sort_rows, Leaderboard, LeaderboardRow, RowStatus, Scenario};
pub use dataset::{DatasetInfo, DatasetStore};
pub use error::BoardError;
pub use service::{
    AddAlgorithmSpec, BoardExport, BoardSpec, DeploySpec, ExperimentSpec, ScenarioSpec, Service, ServiceConfig,
    SimulateSpec,
};
pub use store::{BoardStore, JsonFileStore};
