//! Command-line grammar of `servo`.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use servo_core::{MetricKind, Modality, TaskType};
use servo_plugin::Phase;

/// Parses a value through its serde string form (e.g. `PointPRF1`, `train`).
fn serde_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn metric_kind(s: &str) -> Result<MetricKind, String> {
    serde_name(s)
}

fn task_type(s: &str) -> Result<TaskType, String> {
    serde_name(s)
}

fn phase(s: &str) -> Result<Phase, String> {
    serde_name(s)
}

#[derive(Debug, Parser)]
#[command(name = "servo", version, about = "Fault-injection simulation, algorithm plugins and leaderboards")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand. Each one can also come from a
/// `SERVO_*` environment variable or the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Config file (TOML); defaults to `servo.toml` in the working directory
    /// when that exists.
    #[arg(long, global = true, env = "SERVO_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory holding simulated datasets.
    #[arg(long, global = true, env = "SERVO_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    /// Directory holding deployed plugins and their raw results.
    #[arg(long, global = true, env = "SERVO_PLUGIN_ROOT")]
    pub plugin_root: Option<PathBuf>,
    /// Directory holding scenarios, leaderboards and the fault calendar.
    #[arg(long, global = true, env = "SERVO_BOARD_STORE")]
    pub board_store: Option<PathBuf>,
    /// Default step in seconds for windows written without `@STEP`.
    #[arg(long, global = true, env = "SERVO_STEP")]
    pub step: Option<u64>,
    /// Event-scoring tolerance in ticks.
    #[arg(long, global = true, env = "SERVO_TOLERANCE")]
    pub tolerance: Option<usize>,
    /// First host port handed to plugin sandboxes.
    #[arg(long, global = true, env = "SERVO_PORT_BASE")]
    pub port_base: Option<u16>,
    /// Workload seed used when a command names none.
    #[arg(long, global = true, env = "SERVO_SEED")]
    pub seed: Option<u64>,
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// More logging on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect topology documents.
    #[command(subcommand)]
    Topology(TopologyCmd),
    /// Plan, list and cancel faults on the calendar.
    #[command(subcommand)]
    Faults(FaultsCmd),
    /// Run the simulator and export a dataset.
    Simulate(SimulateArgs),
    /// Work with exported datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Define evaluation scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Deploy and manage algorithm plugins.
    #[command(subcommand)]
    Plugin(PluginCmd),
    /// Run single plugin phases.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Build and inspect leaderboards.
    #[command(subcommand)]
    Board(BoardCmd),
    /// Serve the REST API.
    Serve(ServeArgs),
    /// Plugin SDK helpers.
    #[command(subcommand, hide = true)]
    Sdk(SdkCmd),
}

#[derive(Debug, Subcommand)]
pub enum TopologyCmd {
    /// Check a topology document and summarize it.
    Validate { file: PathBuf },
    /// Print the built-in topology as a document.
    Default,
}

#[derive(Debug, Subcommand)]
pub enum FaultsCmd {
    /// Validate a fault plan and add its faults to the calendar.
    Plan {
        file: PathBuf,
        /// Only validate; do not touch the calendar.
        #[arg(long)]
        check: bool,
        /// Validate targets against this topology instead of the built-in one.
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Show the calendar.
    List,
    /// Remove a fault that has not started yet.
    Cancel { id: String },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Topology document; the built-in topology when absent.
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// Fault plan; the stored calendar when absent.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Workload profile (TOML); a uniform profile when absent.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Simulated time range, `START..END@STEP` in epoch seconds.
    #[arg(long)]
    pub clock: String,
    /// Workload seed (overrides the profile's).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Requests per second for the uniform profile.
    #[arg(long)]
    pub arrival_rate: Option<f64>,
    /// Export into this directory.
    #[arg(long, required_unless_present = "name")]
    pub out: Option<PathBuf>,
    /// Dataset name. Without `--out` the dataset is stored under this name
    /// below the data root; with `--out` it is only recorded in the export.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Cut a window (and a subset of modalities) out of an exported dataset.
    Slice {
        /// Dataset directory to read.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: String,
        /// Comma-separated subset of metrics, logs, traces.
        #[arg(long, value_delimiter = ',')]
        modalities: Vec<Modality>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List named datasets.
    List,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Bind a dataset window to a task.
    Create {
        #[arg(long)]
        name: String,
        #[arg(long)]
        dataset: String,
        /// Evaluation window, `START..END[@STEP]`.
        #[arg(long)]
        window: String,
        /// Window online plugins train on; must not overlap `--window`.
        #[arg(long)]
        train_window: Option<String>,
        /// AD, RCA or FC.
        #[arg(long, value_parser = task_type)]
        task: TaskType,
        #[arg(long, default_value = "")]
        description: String,
    },
    /// List scenarios.
    List,
    /// Show one scenario.
    Show { name: String },
}

#[derive(Debug, Subcommand)]
pub enum PluginCmd {
    /// Deploy a plugin bundle (directory or .tar).
    Deploy {
        bundle: PathBuf,
        /// Instance id; `<name>-<n>` when absent.
        #[arg(long)]
        id: Option<String>,
    },
    /// List plugin instances.
    List,
    /// Stop a running instance.
    Stop { id: String },
    /// Start a stopped or failed instance again.
    Restart { id: String },
    /// Stop and delete an instance.
    Rm { id: String },
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCmd {
    /// Run one phase of a plugin on a dataset window.
    Run {
        #[arg(long)]
        plugin: String,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        window: String,
        /// train, test or run.
        #[arg(long, value_parser = phase)]
        phase: Phase,
        /// Experiment id; `exp-<n>` when absent.
        #[arg(long)]
        id: Option<String>,
    },
    /// Show a stored experiment result.
    Show { id: String },
}

#[derive(Debug, Subcommand)]
pub enum BoardCmd {
    /// Evaluate plugins on a scenario and create a leaderboard.
    Create {
        #[arg(long)]
        scenario: String,
        /// Plugin instance to evaluate (repeatable).
        #[arg(long = "algorithm", required = true)]
        algorithms: Vec<String>,
        /// Metric column (repeatable).
        #[arg(long = "metric", required = true, value_parser = metric_kind)]
        metrics: Vec<MetricKind>,
        /// Metric the rows are ranked by; the first metric when absent.
        #[arg(long, value_parser = metric_kind)]
        primary: Option<MetricKind>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Evaluate one more plugin on an existing leaderboard.
    Add { board: String, plugin: String },
    /// Print a leaderboard as a table.
    Show { board: String },
    /// Write a leaderboard and its raw results as one JSON document.
    Export {
        board: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List leaderboards.
    List,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on.
    #[arg(long, env = "SERVO_BIND")]
    pub bind: Option<SocketAddr>,
}

#[derive(Debug, Subcommand)]
pub enum SdkCmd {
    /// Run the reference 3σ plugin server (what the shipped bundle executes).
    ReferencePlugin,
}
