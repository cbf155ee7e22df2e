//! CLI errors and their exit codes, one per error family.

use std::fmt;
use std::process::ExitCode;

use serde_json::{json, Value};
use servo_board::BoardError;
use servo_core::topology::TopologyError;
use servo_core::workload::SimError;
use servo_plugin::ControllerError;
use thiserror::Error;

/// Error families and the exit code each one maps to. The numbers are part
/// of the command-line interface and do not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ExitFamily {
    Ok = 0,
    Internal = 1,
    Usage = 2,
    Topology = 3,
    FaultPlan = 4,
    Dataset = 5,
    Manifest = 6,
    Bundle = 7,
    Plugin = 8,
    Experiment = 9,
    Leaderboard = 10,
    Io = 11,
}

impl ExitFamily {
    pub const ALL: [ExitFamily; 12] = [
        ExitFamily::Ok,
        ExitFamily::Internal,
        ExitFamily::Usage,
        ExitFamily::Topology,
        ExitFamily::FaultPlan,
        ExitFamily::Dataset,
        ExitFamily::Manifest,
        ExitFamily::Bundle,
        ExitFamily::Plugin,
        ExitFamily::Experiment,
        ExitFamily::Leaderboard,
        ExitFamily::Io,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ExitFamily::Ok => "ok",
            ExitFamily::Internal => "internal",
            ExitFamily::Usage => "usage",
            ExitFamily::Topology => "topology",
            ExitFamily::FaultPlan => "fault plan",
            ExitFamily::Dataset => "simulation, dataset or window",
            ExitFamily::Manifest => "plugin manifest",
            ExitFamily::Bundle => "plugin bundle",
            ExitFamily::Plugin => "plugin lifecycle",
            ExitFamily::Experiment => "experiment",
            ExitFamily::Leaderboard => "scenario or leaderboard",
            ExitFamily::Io => "i/o or configuration",
        }
    }
}

impl From<ExitFamily> for ExitCode {
    fn from(f: ExitFamily) -> Self {
        ExitCode::from(f.code())
    }
}

impl fmt::Display for ExitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Internal(String),
}

impl From<ControllerError> for CliError {
    fn from(e: ControllerError) -> Self {
        CliError::Board(e.into())
    }
}

fn controller_family(e: &ControllerError) -> ExitFamily {
    use ControllerError as C;
    match e {
        C::Manifest(_) => ExitFamily::Manifest,
        C::Bundle(_) => ExitFamily::Bundle,
        C::StartupTimeout { .. }
        | C::UnknownPlugin(_)
        | C::DuplicatePlugin(_)
        | C::InvalidId(_)
        | C::IllegalTransition { .. }
        | C::PluginUnreachable { .. }
        | C::NoFreePort(..)
        | C::Runtime(_) => ExitFamily::Plugin,
        C::PhaseOrder { .. }
        | C::PhaseNotAllowed { .. }
        | C::PayloadInvalid { .. }
        | C::PluginFailure { .. }
        | C::Window(_)
        | C::DuplicateExperiment(_)
        | C::UnknownExperiment(_) => ExitFamily::Experiment,
        C::Io { .. } => ExitFamily::Io,
    }
}

impl CliError {
    pub fn family(&self) -> ExitFamily {
        use BoardError as B;
        match self {
            CliError::Usage(_) => ExitFamily::Usage,
            CliError::Topology(_) => ExitFamily::Topology,
            CliError::Config(_) => ExitFamily::Io,
            CliError::Internal(_) => ExitFamily::Internal,
            CliError::Board(b) => match b {
                B::FaultRejected(_) | B::Plan(_) | B::Calendar(_) => ExitFamily::FaultPlan,
                B::Simulation(SimError::InvalidCalendar(_)) => ExitFamily::FaultPlan,
                B::Simulation(_)
                | B::Csv(_)
                | B::WindowUnavailable(_)
                | B::UnknownDataset(_)
                | B::DuplicateDataset(_) => ExitFamily::Dataset,
                B::PluginNotRunning { .. } => ExitFamily::Plugin,
                B::UnknownBoard(_)
                | B::UnknownScenario(_)
                | B::DuplicateBoard(_)
                | B::DuplicateScenario(_)
                | B::DuplicateAlgorithm { .. }
                | B::IncompatibleMetric { .. }
                | B::DatasetChanged { .. }
                | B::Invalid(_) => ExitFamily::Leaderboard,
                B::Controller(c) => controller_family(c),
                B::Io { .. } => ExitFamily::Io,
            },
        }
    }

    /// Machine-readable code, shared with the REST API where one exists.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Topology(_) => "topology_error",
            CliError::Board(b) => b.code(),
            CliError::Config(_) => "config_error",
            CliError::Internal(_) => "internal",
        }
    }

    /// The `{code, message, detail}` document printed in `--json` mode.
    pub fn to_json(&self) -> Value {
        let detail = match self {
            CliError::Board(b) => b.detail(),
            CliError::Topology(TopologyError::Validation(v)) => {
                json!({"violations": v.iter().map(ToString::to_string).collect::<Vec<_>>()})
            }
            _ => Value::Null,
        };
        json!({
            "code": self.code(),
            "message": self.to_string(),
            "detail": detail,
            "exit_code": self.family().code(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_and_dense() {
        let codes: Vec<u8> = ExitFamily::ALL.iter().map(|f| f.code()).collect();
        assert_eq!(codes, (0..12).collect::<Vec<u8>>());
    }

    #[test]
    fn manifest_and_bundle_errors_have_their_own_codes() {
        let m: CliError = ControllerError::Manifest(servo_plugin::ManifestError::EmptyEntry).into();
        assert_eq!(m.family(), ExitFamily::Manifest);
        let p: CliError = ControllerError::UnknownPlugin("x".into()).into();
        assert_eq!(p.family(), ExitFamily::Plugin);
        let b: CliError = BoardError::UnknownBoard("b".into()).into();
        assert_eq!(b.family(), ExitFamily::Leaderboard);
        assert_eq!(b.to_json()["exit_code"], 10);
    }
}
