//! Errors of the leaderboard service.

use std::io;
use std::path::PathBuf;

use serde_json::{json, Value};
use servo_core::csv_io::CsvError;
use servo_core::faults::{CalendarError, FaultViolation, PlanError};
use servo_core::telemetry::WindowError;
use servo_core::workload::SimError;
use servo_core::{MetricKind, TaskType};
use servo_plugin::{ControllerError, PluginState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoardError {
    #[error("no leaderboard `{0}`")]
    UnknownBoard(String),
    #[error("no scenario `{0}`")]
    UnknownScenario(String),
    #[error("no dataset `{0}`")]
    UnknownDataset(String),
    #[error("leaderboard `{0}` already exists")]
    DuplicateBoard(String),
    #[error("scenario `{0}` already exists")]
    DuplicateScenario(String),
    #[error("dataset `{0}` already exists")]
    DuplicateDataset(String),
    #[error("plugin `{plugin}` is already on leaderboard `{board}`")]
    DuplicateAlgorithm { board: String, plugin: String },
    #[error("metric kind {metric} does not apply to task type {task}")]
    IncompatibleMetric { metric: MetricKind, task: TaskType },
    #[error("plugin `{id}` is {state}, not Running")]
    PluginNotRunning { id: String, state: PluginState },
    #[error("dataset window unavailable: {0}")]
    WindowUnavailable(#[from] WindowError),
    #[error("dataset of leaderboard `{board}` changed (expected {expected}, found {found})")]
    DatasetChanged {
        board: String,
        expected: String,
        found: String,
    },
    #[error("fault rejected: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    FaultRejected(Vec<FaultViolation>),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("i/o error on `{path}`: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl BoardError {
    /// Stable machine-readable name of the error family.
    pub fn code(&self) -> &'static str {
        match self {
            BoardError::UnknownBoard(_) => "unknown_board",
            BoardError::UnknownScenario(_) => "unknown_scenario",
            BoardError::UnknownDataset(_) => "unknown_dataset",
            BoardError::DuplicateBoard(_) => "duplicate_board",
            BoardError::DuplicateScenario(_) => "duplicate_scenario",
            BoardError::DuplicateDataset(_) => "duplicate_dataset",
            BoardError::DuplicateAlgorithm { .. } => "duplicate_algorithm",
            BoardError::IncompatibleMetric { .. } => "incompatible_metric",
            BoardError::PluginNotRunning { .. } => "plugin_not_running",
            BoardError::WindowUnavailable(_) => "window_unavailable",
            BoardError::DatasetChanged { .. } => "dataset_changed",
            BoardError::FaultRejected(_) => "fault_rejected",
            BoardError::Plan(_) => "plan_error",
            BoardError::Calendar(CalendarError::UnknownFault(_)) => "unknown_fault",
            BoardError::Calendar(_) => "calendar_error",
            BoardError::Simulation(_) => "simulation_error",
            BoardError::Csv(_) => "dataset_error",
            BoardError::Controller(e) => e.code(),
            BoardError::Invalid(_) => "invalid_request",
            BoardError::Io { .. } => "io_error",
        }
    }

    /// Structured detail for API clients (`null` when there is none).
    pub fn detail(&self) -> Value {
        match self {
            BoardError::IncompatibleMetric { metric, task } => json!({"metric": metric, "task_type": task}),
            BoardError::PluginNotRunning { id, state } => json!({"plugin": id, "state": state}),
            BoardError::DuplicateAlgorithm { board, plugin } => json!({"board": board, "plugin": plugin}),
            BoardError::FaultRejected(v) => json!({"violations": v}),
            BoardError::Controller(ControllerError::PayloadInvalid { path, .. }) => json!({"path": path}),
            BoardError::Controller(ControllerError::IllegalTransition { id, from, to }) => {
                json!({"plugin": id, "from": from, "to": to})
            }
            _ => Value::Null,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(io::Error) -> BoardError + '_ {
    move |source| BoardError::Io {
        path: path.to_path_buf(),
        source,
    }
}
