//! The leaderboard service: fault calendar, datasets, scenarios, plugins,
//! experiments and leaderboards behind one facade. The REST API and the CLI
//! are thin layers over [`Service`].
//!
//! Building a leaderboard follows five stages: the fault plan is fixed by the
//! scenario's dataset, the scenario selects the dataset window, the caller
//! chooses algorithms (plugin instances), each algorithm runs as one or two
//! experiments, and the resulting payloads are scored into rows.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use servo_core::faults::{validate_fault, PlanEntry};
use servo_core::scoring::{evaluate, ScoreOptions};
use servo_core::telemetry::WindowError;
use servo_core::{
    default_boutique_topology, DatasetWindow, FaultCalendar, MetricKind, ServiceTopology, SimClock, TelemetryBatch,
    WorkloadProfile,
};
use servo_plugin::manifest::is_identifier;
use servo_plugin::{
    DeployOptions, DeploymentMode, ExperimentRequest, ExperimentResult, Phase, PluginInstance,
    PluginState,
};

use crate::backend::PluginBackend;
use crate::board::{payload_hash, Leaderboard, LeaderboardRow, RowStatus, Scenario};
use crate::dataset::{DatasetInfo, DatasetStore};
use crate::error::{io_err, BoardError};
use crate::store::{write_atomic, BoardStore, JsonFileStore};

/// File below the state directory holding the fault calendar.
pub const CALENDAR_FILE: &str = "faults.json";

/// Requests per second of the uniform workload used when none is configured.
pub const DEFAULT_ARRIVAL_RATE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Boards, scenarios, results and the fault calendar.
    pub state_dir: PathBuf,
    /// Simulated datasets.
    pub data_root: PathBuf,
    pub topology: ServiceTopology,
    /// Scoring options used when a board does not bring its own.
    pub score: ScoreOptions,
    /// Workload seed used when a simulation request names none.
    pub seed: u64,
    /// Requests per second used when a simulation request names none.
    pub arrival_rate: f64,
}

impl ServiceConfig {
    pub fn new(state_dir: impl Into<PathBuf>, data_root: impl Into<PathBuf>) -> Self {
        Self {
            state_dir: state_dir.into(),
            data_root: data_root.into(),
            topology: default_boutique_topology(),
            score: ScoreOptions::default(),
            seed: 0,
            arrival_rate: DEFAULT_ARRIVAL_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub task_type: servo_core::TaskType,
    pub dataset: String,
    pub window: DatasetWindow,
    #[serde(default)]
    pub train_window: Option<DatasetWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSpec {
    /// Dataset name.
    pub name: String,
    pub clock: SimClock,
    /// Full workload profile; defaults to uniform traffic.
    #[serde(default)]
    pub profile: Option<WorkloadProfile>,
    /// Overrides the profile's seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub arrival_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploySpec {
    /// Bundle directory or archive, as seen by the service.
    pub bundle: PathBuf,
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Defaults to the lowest free `exp-<n>`.
    #[serde(default)]
    pub experiment_id: Option<String>,
    pub plugin_id: String,
    pub dataset: String,
    pub window: DatasetWindow,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    /// Defaults to the lowest free `board-<n>`.
    #[serde(default)]
    pub id: Option<String>,
    pub scenario: String,
    /// Plugin instance ids.
    pub algorithms: Vec<String>,
    pub metrics: Vec<MetricKind>,
    /// Defaults to the first metric.
    #[serde(default)]
    pub primary_metric: Option<MetricKind>,
    #[serde(default)]
    pub options: Option<ScoreOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddAlgorithmSpec {
    pub plugin_id: String,
}

/// A board with the raw results behind its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardExport {
    pub board: Leaderboard,
    pub results: Vec<ExperimentResult>,
}

type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

fn system_now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

/// Payloads of `a` can be scored as `b`.
fn same_payload_shape(a: MetricKind, b: MetricKind) -> bool {
    a.task_type() == b.task_type() && (a == MetricKind::TopAtK) == (b == MetricKind::TopAtK)
}

fn check_identifier(kind: &str, id: &str) -> Result<(), BoardError> {
    if is_identifier(id) {
        Ok(())
    } else {
        Err(BoardError::Invalid(format!(
            "{kind} `{id}` must use letters, digits, `.`, `_` or `-`"
        )))
    }
}

fn window_within(outer: &DatasetWindow, inner: &DatasetWindow) -> Result<(), BoardError> {
    inner.validate()?;
    if !outer.covers(inner) {
        return Err(WindowError::OutOfRange {
            start: inner.start,
            end: inner.end,
            batch_start: outer.start,
            batch_end: outer.end,
        }
        .into());
    }
    Ok(())
}

pub struct Service {
    cfg: ServiceConfig,
    store: Arc<dyn BoardStore>,
    datasets: Arc<DatasetStore>,
    backend: Arc<dyn PluginBackend>,
    calendar: Mutex<FaultCalendar>,
    board_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    /// Ids handed out but not yet persisted.
    reserved: Mutex<HashSet<String>>,
    clock: Clock,
}

impl Service {
    /// Opens the service with a JSON file store in `cfg.state_dir`.
    pub fn open(cfg: ServiceConfig, backend: Arc<dyn PluginBackend>) -> Result<Self, BoardError> {
        let store = Arc::new(JsonFileStore::new(&cfg.state_dir));
        Self::with_store(cfg, store, backend)
    }

    pub fn with_store(
        cfg: ServiceConfig,
        store: Arc<dyn BoardStore>,
        backend: Arc<dyn PluginBackend>,
    ) -> Result<Self, BoardError> {
        fs::create_dir_all(&cfg.state_dir).map_err(io_err(&cfg.state_dir))?;
        let cal_path = cfg.state_dir.join(CALENDAR_FILE);
        let calendar = match fs::read(&cal_path) {
            Ok(bytes) => {
                let value = serde_json::from_slice(&bytes).map_err(|e| BoardError::Io {
                    path: cal_path.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                })?;
                FaultCalendar::from_export_json(&value)?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => FaultCalendar::new(),
            Err(e) => return Err(io_err(&cal_path)(e)),
        };
        Ok(Self {
            datasets: Arc::new(DatasetStore::new(&cfg.data_root)),
            cfg,
            store,
            backend,
            calendar: Mutex::new(calendar),
            board_locks: Mutex::default(),
            reserved: Mutex::default(),
            clock: Arc::new(system_now),
        })
    }

    /// Replaces the wall clock (Unix seconds) used for fault scheduling and
    /// timestamps.
    pub fn with_clock(mut self, clock: impl Fn() -> i64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn datasets(&self) -> &DatasetStore {
        &self.datasets
    }

    fn now(&self) -> i64 {
        (self.clock)()
    }

    // ---- faults ------------------------------------------------------------

    pub fn faults(&self) -> Vec<PlanEntry> {
        self.calendar.lock().unwrap().to_plan_entries()
    }

    fn save_calendar(&self, cal: &FaultCalendar) -> Result<(), BoardError> {
        let path = self.cfg.state_dir.join(CALENDAR_FILE);
        let bytes = serde_json::to_vec_pretty(&cal.export_json()).expect("calendar serializes");
        write_atomic(&path, &bytes).map_err(io_err(&path))
    }

    /// Validates and schedules a fault; returns it with its id and resolved
    /// start.
    pub fn schedule_fault(&self, entry: &PlanEntry) -> Result<PlanEntry, BoardError> {
        let now = self.now();
        let (def, mode) = entry.to_definition(now)?;
        let violations = validate_fault(&def, &self.cfg.topology);
        if !violations.is_empty() {
            return Err(BoardError::FaultRejected(violations));
        }
        let mut cal = self.calendar.lock().unwrap();
        let id = cal.schedule(def, mode, now)?;
        if let Err(e) = self.save_calendar(&cal) {
            cal.cancel(&id, i64::MIN).ok();
            return Err(e);
        }
        let stored = cal.get(&id).expect("just scheduled");
        tracing::info!(fault = %id, "fault scheduled");
        Ok(PlanEntry::from_definition(&stored.fault, stored.mode))
    }

    /// Cancels a fault that has not started yet.
    pub fn cancel_fault(&self, id: &str) -> Result<PlanEntry, BoardError> {
        let mut cal = self.calendar.lock().unwrap();
        let mode = cal.get(id).map(|e| e.mode).unwrap_or_default();
        let def = cal.cancel(id, self.now())?;
        self.save_calendar(&cal)?;
        tracing::info!(fault = %id, "fault cancelled");
        Ok(PlanEntry::from_definition(&def, mode))
    }

    // ---- datasets ----------------------------------------------------------

    /// Simulates the current calendar into a new dataset.
    pub async fn simulate(&self, spec: &SimulateSpec) -> Result<DatasetInfo, BoardError> {
        check_identifier("dataset name", &spec.name)?;
        if self.datasets.path(&spec.name).exists() {
            return Err(BoardError::DuplicateDataset(spec.name.clone()));
        }
        let topology = self.cfg.topology.clone();
        let mut profile = spec.profile.clone().unwrap_or_else(|| {
            WorkloadProfile::uniform(&topology, spec.arrival_rate.unwrap_or(self.cfg.arrival_rate), self.cfg.seed)
        });
        if let Some(seed) = spec.seed {
            profile.seed = seed;
        }
        let calendar = self.calendar.lock().unwrap().clone();
        let (datasets, name, clock) = (self.datasets.clone(), spec.name.clone(), spec.clock);
        let info = tokio::task::spawn_blocking(move || datasets.simulate(&name, &topology, &profile, &calendar, &clock))
            .await
            .expect("simulation task does not panic")?;
        tracing::info!(dataset = %info.name, window = %info.window, "dataset simulated");
        Ok(info)
    }

    pub fn list_datasets(&self) -> Result<Vec<DatasetInfo>, BoardError> {
        self.datasets.list()
    }

    // ---- scenarios ---------------------------------------------------------

    pub fn scenarios(&self) -> Result<Vec<Scenario>, BoardError> {
        self.store
            .scenario_names()?
            .iter()
            .map(|n| self.store.load_scenario(n))
            .collect()
    }

    pub fn scenario(&self, name: &str) -> Result<Scenario, BoardError> {
        self.store.load_scenario(name)
    }

    pub fn create_scenario(&self, spec: &ScenarioSpec) -> Result<Scenario, BoardError> {
        check_identifier("scenario name", &spec.name)?;
        let _reservation = self.reserve(&format!("scenario:{}", spec.name))?;
        if self.store.scenario_names()?.contains(&spec.name) {
            return Err(BoardError::DuplicateScenario(spec.name.clone()));
        }
        let info = self.datasets.info(&spec.dataset)?;
        window_within(&info.window, &spec.window)?;
        if let Some(train) = &spec.train_window {
            window_within(&info.window, train)?;
            if !train.disjoint(&spec.window) {
                return Err(BoardError::Invalid(format!(
                    "training window {train} overlaps evaluation window {}",
                    spec.window
                )));
            }
        }
        let fault_plan = info
            .faults
            .iter()
            .filter(|f| {
                let start = f.start.unwrap_or(i64::MIN);
                let end = start.saturating_add(f.duration as i64);
                start < spec.window.end && end > spec.window.start
            })
            .cloned()
            .collect();
        let scenario = Scenario {
            name: spec.name.clone(),
            description: spec.description.clone(),
            task_type: spec.task_type,
            dataset: spec.dataset.clone(),
            window: spec.window.clone(),
            train_window: spec.train_window.clone(),
            fault_plan,
        };
        self.store.save_scenario(&scenario)?;
        Ok(scenario)
    }

    // ---- plugins -----------------------------------------------------------

    pub fn plugins(&self) -> Vec<PluginInstance> {
        self.backend.list()
    }

    pub fn plugin(&self, id: &str) -> Result<PluginInstance, BoardError> {
        Ok(self.backend.get(id)?)
    }

    pub async fn deploy_plugin(&self, spec: &DeploySpec) -> Result<PluginInstance, BoardError> {
        let opts = DeployOptions { id: spec.id.clone() };
        Ok(self.backend.deploy(&spec.bundle, opts).await?)
    }

    pub async fn stop_plugin(&self, id: &str) -> Result<PluginInstance, BoardError> {
        Ok(self.backend.stop(id).await?)
    }

    pub async fn restart_plugin(&self, id: &str) -> Result<PluginInstance, BoardError> {
        Ok(self.backend.restart(id).await?)
    }

    pub async fn remove_plugin(&self, id: &str) -> Result<PluginInstance, BoardError> {
        Ok(self.backend.remove(id).await?)
    }

    fn running_plugin(&self, id: &str) -> Result<PluginInstance, BoardError> {
        let p = self.backend.get(id)?;
        if p.state != PluginState::Running {
            return Err(BoardError::PluginNotRunning {
                id: p.id,
                state: p.state,
            });
        }
        Ok(p)
    }

    // ---- experiments -------------------------------------------------------

    /// Holds an id until dropped so concurrent requests cannot both take it.
    fn reserve(&self, key: &str) -> Result<Reservation<'_>, BoardError> {
        if !self.reserved.lock().unwrap().insert(key.to_string()) {
            return Err(BoardError::Invalid(format!("`{key}` is being created concurrently")));
        }
        Ok(Reservation {
            set: &self.reserved,
            key: key.to_string(),
        })
    }

    fn fresh_id(&self, prefix: &str, taken: impl Fn(&str) -> bool) -> Result<(String, Reservation<'_>), BoardError> {
        for n in 0.. {
            let id = format!("{prefix}-{n}");
            if taken(&id) {
                continue;
            }
            if let Ok(r) = self.reserve(&format!("{prefix}:{id}")) {
                return Ok((id, r));
            }
        }
        unreachable!("unbounded id space")
    }

    pub fn experiment(&self, experiment_id: &str) -> Result<ExperimentResult, BoardError> {
        match self.store.load_result(experiment_id)? {
            Some(r) => Ok(r),
            None => Ok(self.backend.result(experiment_id)?),
        }
    }

    /// Runs one phase of one plugin on a dataset window.
    pub async fn run_experiment(&self, spec: &ExperimentSpec) -> Result<ExperimentResult, BoardError> {
        self.running_plugin(&spec.plugin_id)?;
        let (experiment_id, _reservation) = match &spec.experiment_id {
            Some(id) => {
                check_identifier("experiment id", id)?;
                (id.clone(), self.reserve(&format!("exp:{id}"))?)
            }
            None => {
                let stored = self.store.result_ids()?;
                self.fresh_id("exp", |id| stored.iter().any(|s| s == id) || self.backend.result(id).is_ok())?
            }
        };
        let batch = self.datasets.batch(&spec.dataset)?;
        let req = ExperimentRequest {
            experiment_id,
            plugin_id: spec.plugin_id.clone(),
            window: spec.window.clone(),
            phase: spec.phase,
        };
        self.run_and_record(&req, &batch).await
    }

    /// Runs `req` and stores its result, failed ones included.
    async fn run_and_record(&self, req: &ExperimentRequest, batch: &TelemetryBatch) -> Result<ExperimentResult, BoardError> {
        match self.backend.run_experiment(req, batch).await {
            Ok(result) => {
                self.store.save_result(&result)?;
                Ok(result)
            }
            Err(e) => {
                if let Ok(failed) = self.backend.result(&req.experiment_id) {
                    self.store.save_result(&failed)?;
                }
                Err(e.into())
            }
        }
    }

    // ---- leaderboards ------------------------------------------------------

    pub fn boards(&self) -> Result<Vec<Leaderboard>, BoardError> {
        self.store.board_ids()?.iter().map(|id| self.store.load_board(id)).collect()
    }

    pub fn board(&self, id: &str) -> Result<Leaderboard, BoardError> {
        self.store.load_board(id)
    }

    pub fn export_board(&self, id: &str) -> Result<BoardExport, BoardError> {
        let board = self.store.load_board(id)?;
        let prefix = format!("{id}.");
        let results = self
            .store
            .result_ids()?
            .iter()
            .filter(|r| r.starts_with(&prefix))
            .filter_map(|r| self.store.load_result(r).transpose())
            .collect::<Result<_, _>>()?;
        Ok(BoardExport { board, results })
    }

    fn board_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.board_locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    /// Checks that `plugin` can be evaluated on `scenario` with `metrics`.
    fn check_algorithm(&self, plugin: &PluginInstance, scenario: &Scenario, metrics: &[MetricKind]) -> Result<(), BoardError> {
        let own = plugin.manifest.metric_kind;
        if plugin.manifest.task_type != scenario.task_type {
            return Err(BoardError::IncompatibleMetric {
                metric: own,
                task: scenario.task_type,
            });
        }
        if let Some(m) = metrics.iter().find(|m| !same_payload_shape(own, **m)) {
            return Err(BoardError::Invalid(format!(
                "plugin `{}` produces {own} payloads, which cannot be scored as {m}",
                plugin.id
            )));
        }
        if plugin.manifest.deployment_mode == DeploymentMode::Online && !plugin.trained && scenario.train_window.is_none() {
            return Err(BoardError::Invalid(format!(
                "online plugin `{}` is untrained and scenario `{}` has no training window",
                plugin.id, scenario.name
            )));
        }
        Ok(())
    }

    /// Evaluation and training slices of the scenario, with their hashes.
    fn scenario_data(&self, scenario: &Scenario) -> Result<(Arc<TelemetryBatch>, TelemetryBatch, Option<String>), BoardError> {
        let full = self.datasets.batch(&scenario.dataset)?;
        let truth = full.slice(&scenario.window)?;
        let train_hash = match &scenario.train_window {
            Some(w) => Some(full.slice(w)?.content_hash()),
            None => None,
        };
        Ok((full, truth, train_hash))
    }

    /// Runs one plugin for a board and scores it. Never fails: problems
    /// become a failed row.
    #[allow(clippy::too_many_arguments)]
    async fn evaluate_algorithm(
        &self,
        board_id: &str,
        plugin: &PluginInstance,
        scenario: &Scenario,
        metrics: &[MetricKind],
        options: &ScoreOptions,
        full: &TelemetryBatch,
        truth: &TelemetryBatch,
    ) -> LeaderboardRow {
        let exp = |phase: Phase| format!("{board_id}.{}.{phase}", plugin.id);
        let mut row = LeaderboardRow {
            algorithm: plugin.id.clone(),
            plugin_name: plugin.manifest.name.clone(),
            metrics: Default::default(),
            experiment_id: String::new(),
            computed_at: 0,
            status: RowStatus::Failed,
            failure_reason: None,
            payload_hash: None,
            wall_time: 0.0,
        };
        let mut phases = Vec::new();
        match plugin.manifest.deployment_mode {
            DeploymentMode::Online => {
                if let Some(w) = &scenario.train_window {
                    phases.push((Phase::Train, w.clone()));
                }
                phases.push((Phase::Test, scenario.window.clone()));
            }
            DeploymentMode::Batch => phases.push((Phase::Run, scenario.window.clone())),
        }
        let mut scored = None;
        for (phase, window) in phases {
            let req = ExperimentRequest {
                experiment_id: exp(phase),
                plugin_id: plugin.id.clone(),
                window,
                phase,
            };
            row.experiment_id = req.experiment_id.clone();
            let outcome = self.run_and_record(&req, full).await;
            // Temporary files are the plugin's; dropping them is best effort.
            if let Err(e) = self.backend.clear(&plugin.id, &req.experiment_id).await {
                tracing::debug!(plugin = %plugin.id, "clear failed: {e}");
            }
            match outcome {
                Ok(result) => scored = Some(result),
                Err(e) => {
                    row.failure_reason = Some(e.to_string());
                    scored = None;
                    break;
                }
            }
        }
        row.computed_at = self.now();
        let Some(result) = scored else {
            return row;
        };
        row.wall_time = result.wall_time;
        let Some(payload) = result.payload else {
            row.failure_reason = Some("result has no payload".into());
            return row;
        };
        row.payload_hash = Some(payload_hash(&payload));
        for kind in metrics {
            match evaluate(*kind, &payload, truth, options) {
                Ok(v) => {
                    row.metrics.insert(*kind, v);
                }
                Err(e) => {
                    row.metrics.clear();
                    row.failure_reason = Some(format!("scoring {kind}: {e}"));
                    return row;
                }
            }
        }
        row.status = RowStatus::Ok;
        row
    }

    /// Runs every algorithm on the scenario and stores a new board.
    pub async fn create_board(&self, spec: &BoardSpec) -> Result<Leaderboard, BoardError> {
        let scenario = self.store.load_scenario(&spec.scenario)?;
        if spec.metrics.is_empty() {
            return Err(BoardError::Invalid("at least one metric is required".into()));
        }
        if let Some(m) = spec.metrics.iter().find(|m| !m.compatible_with(scenario.task_type)) {
            return Err(BoardError::IncompatibleMetric {
                metric: *m,
                task: scenario.task_type,
            });
        }
        let primary = spec.primary_metric.unwrap_or(spec.metrics[0]);
        if !spec.metrics.contains(&primary) {
            return Err(BoardError::Invalid(format!("primary metric {primary} is not among the metrics")));
        }
        if spec.algorithms.is_empty() {
            return Err(BoardError::Invalid("at least one algorithm is required".into()));
        }
        let mut plugins = Vec::new();
        for (i, id) in spec.algorithms.iter().enumerate() {
            if spec.algorithms[..i].contains(id) {
                return Err(BoardError::DuplicateAlgorithm {
                    board: spec.id.clone().unwrap_or_default(),
                    plugin: id.clone(),
                });
            }
            let p = self.running_plugin(id)?;
            self.check_algorithm(&p, &scenario, &spec.metrics)?;
            plugins.push(p);
        }
        let (full, truth, train_hash) = self.scenario_data(&scenario)?;

        let existing = self.store.board_ids()?;
        let (id, _reservation) = match &spec.id {
            Some(id) => {
                check_identifier("board id", id)?;
                if existing.contains(id) {
                    return Err(BoardError::DuplicateBoard(id.clone()));
                }
                (id.clone(), self.reserve(&format!("board:{id}"))?)
            }
            None => self.fresh_id("board", |id| existing.iter().any(|e| e == id))?,
        };
        let lock = self.board_lock(&id);
        let _guard = lock.lock().await;

        let options = spec.options.clone().unwrap_or_else(|| self.cfg.score.clone());
        let rows = futures::future::join_all(
            plugins
                .iter()
                .map(|p| self.evaluate_algorithm(&id, p, &scenario, &spec.metrics, &options, &full, &truth)),
        )
        .await;
        let now = self.now();
        let mut board = Leaderboard {
            id,
            scenario,
            metrics: spec.metrics.clone(),
            primary_metric: primary,
            options,
            rows,
            version: 1,
            dataset_hash: truth.content_hash(),
            train_dataset_hash: train_hash,
            created_at: now,
            updated_at: now,
        };
        board.sort();
        self.store.save_board(&board)?;
        tracing::info!(board = %board.id, rows = board.rows.len(), "leaderboard created");
        Ok(board)
    }

    /// Evaluates one more plugin on an existing board. Existing rows are
    /// kept as they are.
    pub async fn add_algorithm(&self, board_id: &str, plugin_id: &str) -> Result<Leaderboard, BoardError> {
        let lock = self.board_lock(board_id);
        let _guard = lock.lock().await;
        let mut board = self.store.load_board(board_id)?;
        if board.row(plugin_id).is_some() {
            return Err(BoardError::DuplicateAlgorithm {
                board: board_id.into(),
                plugin: plugin_id.into(),
            });
        }
        let plugin = self.running_plugin(plugin_id)?;
        self.check_algorithm(&plugin, &board.scenario, &board.metrics)?;
        let (full, truth, train_hash) = self.scenario_data(&board.scenario)?;
        let found = truth.content_hash();
        if found != board.dataset_hash || train_hash != board.train_dataset_hash {
            return Err(BoardError::DatasetChanged {
                board: board_id.into(),
                expected: board.dataset_hash.clone(),
                found,
            });
        }
        let row = self
            .evaluate_algorithm(board_id, &plugin, &board.scenario, &board.metrics, &board.options, &full, &truth)
            .await;
        board.rows.push(row);
        board.version += 1;
        board.updated_at = self.now();
        board.sort();
        self.store.save_board(&board)?;
        tracing::info!(board = %board.id, plugin = %plugin_id, version = board.version, "algorithm added");
        Ok(board)
    }
}

struct Reservation<'a> {
    set: &'a Mutex<HashSet<String>>,
    key: String,
}

impl Drop for Reservation<'_> {
    fn drop(&mut self) {
        self.set.lock().unwrap().remove(&self.key);
    }
}
