//! The plugin controller: deploys bundles into sandboxes, drives their
//! lifecycle, runs experiment phases over the wire contract and keeps the
//! resulting [`ExperimentResult`]s on disk.
//!
//! Layout below the controller root:
//!
//! ```text
//! registry.json                 deployed instances
//! plugins/<id>/bundle/          installed bundle
//! plugins/<id>/work/            sandbox working directory
//! plugins/<id>/work/data/<exp>/ dataset delivered for one experiment
//! results/<exp>.json            experiment results
//! ```
//!
//! Operations on one plugin are serialized; different plugins run in
//! parallel.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use servo_core::csv_io::export_csv;
use servo_core::payload::parse_result_payload;
use servo_core::telemetry::WindowError;
use servo_core::{DatasetWindow, MetricKind, TelemetrySource};
use thiserror::Error;

use crate::bundle::{self, resolve_program, BundleError};
use crate::manifest::{is_identifier, DeploymentMode, ManifestError};
use crate::registry::{write_atomic, PluginInstance, PluginRecord, PluginState, Registry};
use crate::runtime::{RuntimeError, SandboxHandle, SandboxRuntime, SandboxSpec, SANDBOX_LOG};
use crate::wire::{HealthReply, Phase, PhaseReply, PhaseRequest, ReplyStatus};

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub root: PathBuf,
    /// Address plugin endpoints are reached on.
    pub host: String,
    /// First host port handed out; allocation is sequential from here.
    pub port_base: u16,
    pub startup_timeout: Duration,
    pub phase_timeout: Duration,
    pub stop_grace: Duration,
}

impl ControllerConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            host: "127.0.0.1".into(),
            port_base: 18000,
            startup_timeout: Duration::from_secs(20),
            phase_timeout: Duration::from_secs(300),
            stop_grace: Duration::from_secs(3),
        }
    }
}

/// How many ports past the base the allocator will try.
const PORT_SPAN: u16 = 2000;

#[derive(Debug, Clone, Default)]
pub struct DeployOptions {
    /// Instance id; defaults to the lowest free `<name>-<n>`.
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRequest {
    pub experiment_id: String,
    pub plugin_id: String,
    pub window: DatasetWindow,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment_id: String,
    pub plugin_id: String,
    pub phase: Phase,
    pub metric_kind: MetricKind,
    pub window: DatasetWindow,
    /// Dataset directory as handed to the sandbox.
    pub data_dir: String,
    /// Content hash of the delivered dataset slice.
    pub dataset_hash: String,
    #[serde(default)]
    pub payload: Option<Value>,
    /// Seconds from request to reply.
    pub wall_time: f64,
    pub status: ResultStatus,
    #[serde(default)]
    pub failure_reason: Option<String>,
    /// Unix seconds.
    pub finished_at: i64,
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("plugin `{id}` did not become ready within {secs:.1}s: {detail}")]
    StartupTimeout { id: String, secs: f64, detail: String },
    #[error("no plugin `{0}`")]
    UnknownPlugin(String),
    #[error("plugin `{0}` already exists")]
    DuplicatePlugin(String),
    #[error("invalid id `{0}`: use letters, digits, `.`, `_` or `-`")]
    InvalidId(String),
    #[error("plugin `{id}` cannot go from {from} to {to}")]
    IllegalTransition { id: String, from: PluginState, to: PluginState },
    #[error("plugin `{id}` is unreachable: {detail}")]
    PluginUnreachable { id: String, detail: String },
    #[error("plugin `{id}` must complete a train phase before test")]
    PhaseOrder { id: String },
    #[error("phase {phase} is not available to {mode} plugin `{id}`")]
    PhaseNotAllowed { id: String, phase: Phase, mode: DeploymentMode },
    #[error("experiment `{experiment_id}` returned an invalid payload at `{path}`: {message}")]
    PayloadInvalid {
        experiment_id: String,
        path: String,
        message: String,
    },
    #[error("experiment `{experiment_id}` failed: {reason}")]
    PluginFailure { experiment_id: String, reason: String },
    #[error("dataset window unavailable: {0}")]
    Window(#[from] WindowError),
    #[error("experiment `{0}` already exists")]
    DuplicateExperiment(String),
    #[error("no experiment `{0}`")]
    UnknownExperiment(String),
    #[error("no free host port in {0}..{1}")]
    NoFreePort(u16, u16),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("i/o error on `{path}`: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl ControllerError {
    /// Stable machine-readable name of the error family.
    pub fn code(&self) -> &'static str {
        match self {
            ControllerError::Manifest(_) => "manifest_error",
            ControllerError::Bundle(_) => "bundle_error",
            ControllerError::StartupTimeout { .. } => "startup_timeout",
            ControllerError::UnknownPlugin(_) => "unknown_plugin",
            ControllerError::DuplicatePlugin(_) => "duplicate_plugin",
            ControllerError::InvalidId(_) => "invalid_id",
            ControllerError::IllegalTransition { .. } => "illegal_transition",
            ControllerError::PluginUnreachable { .. } => "plugin_unreachable",
            ControllerError::PhaseOrder { .. } => "phase_order",
            ControllerError::PhaseNotAllowed { .. } => "phase_not_allowed",
            ControllerError::PayloadInvalid { .. } => "payload_invalid",
            ControllerError::PluginFailure { .. } => "plugin_failure",
            ControllerError::Window(_) => "window_unavailable",
            ControllerError::DuplicateExperiment(_) => "duplicate_experiment",
            ControllerError::UnknownExperiment(_) => "unknown_experiment",
            ControllerError::NoFreePort(..) => "no_free_port",
            ControllerError::Runtime(_) => "runtime_error",
            ControllerError::Io { .. } => "io_error",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ControllerError + '_ {
    move |source| ControllerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Outcome of [`PluginController::reconcile`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReconcileReport {
    /// Registered as running but their sandbox was gone; now `Stopped`.
    pub marked_stopped: Vec<String>,
    /// Live sandboxes whose instance was not running; now terminated.
    pub terminated: Vec<String>,
}

pub struct PluginController {
    cfg: ControllerConfig,
    runtime: Arc<dyn SandboxRuntime>,
    registry: Mutex<Registry>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    http: reqwest::Client,
}

static STAGING_COUNTER: AtomicU64 = AtomicU64::new(0);

fn unix_now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

impl PluginController {
    /// Opens (or initializes) the controller state under `cfg.root`.
    pub fn open(mut cfg: ControllerConfig, runtime: Arc<dyn SandboxRuntime>) -> Result<Self, ControllerError> {
        // Sandboxes run in their own working directories, so every path
        // handed to them must be absolute.
        cfg.root = std::path::absolute(&cfg.root).map_err(io_err(&cfg.root))?;
        for dir in [cfg.root.clone(), cfg.root.join("plugins"), cfg.root.join("results")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let registry = Registry::load(&cfg.root).map_err(io_err(&cfg.root))?;
        let http = reqwest::Client::builder()
            .no_proxy()
            .build()
            .expect("http client builds");
        Ok(Self {
            cfg,
            runtime,
            registry: Mutex::new(registry),
            locks: Mutex::new(HashMap::new()),
            http,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn runtime(&self) -> &dyn SandboxRuntime {
        self.runtime.as_ref()
    }

    fn plugin_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    fn record(&self, id: &str) -> Result<PluginRecord, ControllerError> {
        self.registry
            .lock()
            .unwrap()
            .plugins
            .get(id)
            .cloned()
            .ok_or_else(|| ControllerError::UnknownPlugin(id.to_string()))
    }

    /// Applies `f` to the record and persists the registry.
    fn update(&self, id: &str, f: impl FnOnce(&mut PluginRecord)) -> Result<PluginRecord, ControllerError> {
        let mut reg = self.registry.lock().unwrap();
        let rec = reg
            .plugins
            .get_mut(id)
            .ok_or_else(|| ControllerError::UnknownPlugin(id.to_string()))?;
        f(rec);
        let out = rec.clone();
        reg.save(&self.cfg.root).map_err(io_err(&self.cfg.root))?;
        Ok(out)
    }

    fn transition(&self, id: &str, to: PluginState, f: impl FnOnce(&mut PluginRecord)) -> Result<PluginRecord, ControllerError> {
        let rec = self.record(id)?;
        if !rec.state.can_become(to) {
            return Err(ControllerError::IllegalTransition {
                id: id.to_string(),
                from: rec.state,
                to,
            });
        }
        self.update(id, |r| {
            r.state = to;
            f(r);
        })
    }

    pub fn list(&self) -> Vec<PluginInstance> {
        self.registry.lock().unwrap().plugins.values().map(PluginRecord::view).collect()
    }

    pub fn get(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        self.record(id).map(|r| r.view())
    }

    fn allocate_port(&self, reg: &Registry) -> Result<u16, ControllerError> {
        let used: Vec<u16> = reg.ports_in_use().collect();
        let end = self.cfg.port_base.saturating_add(PORT_SPAN);
        (self.cfg.port_base..end)
            .find(|p| !used.contains(p) && TcpListener::bind((self.cfg.host.as_str(), *p)).is_ok())
            .ok_or(ControllerError::NoFreePort(self.cfg.port_base, end))
    }

    fn spec(&self, rec: &PluginRecord) -> SandboxSpec {
        SandboxSpec {
            id: rec.id.clone(),
            bundle_dir: rec.bundle_dir.clone(),
            work_dir: rec.work_dir.clone(),
            command: rec.manifest.entry.command.clone(),
            host_port: rec.port.expect("live instances hold a port"),
            image: rec.manifest.entry.image.clone(),
        }
    }

    /// Installs `bundle_source` (directory or `.tar`), starts its sandbox and
    /// waits until the plugin answers `/health`.
    pub async fn deploy(&self, bundle_source: &Path, opts: DeployOptions) -> Result<PluginInstance, ControllerError> {
        let staging = self.cfg.root.join("staging").join(format!(
            "{}-{}",
            std::process::id(),
            STAGING_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let staged = bundle::install(bundle_source, &staging);
        let result = self.register(staged, opts).await;
        let _ = fs::remove_dir_all(&staging);
        let rec = result?;
        self.start_sandbox(&rec.id).await
    }

    async fn register(&self, staged: Result<PathBuf, BundleError>, opts: DeployOptions) -> Result<PluginRecord, ControllerError> {
        let staged_root = staged?;
        let manifest = bundle::read_manifest(&staged_root)??;
        let program = &manifest.entry.command[0];
        if resolve_program(&staged_root, program).is_none() {
            return Err(BundleError::MissingEntry(program.clone()).into());
        }
        let mut reg = self.registry.lock().unwrap();
        let id = match opts.id {
            Some(id) if !is_identifier(&id) => return Err(ControllerError::InvalidId(id)),
            Some(id) if reg.plugins.contains_key(&id) => return Err(ControllerError::DuplicatePlugin(id)),
            Some(id) => id,
            None => reg.fresh_id(&manifest.name),
        };
        let port = self.allocate_port(&reg)?;
        let plugin_dir = self.cfg.root.join("plugins").join(&id);
        let _ = fs::remove_dir_all(&plugin_dir);
        let bundle_dir = plugin_dir.join("bundle");
        let work_dir = plugin_dir.join("work");
        fs::create_dir_all(&work_dir).map_err(io_err(&work_dir))?;
        fs::rename(&staged_root, &bundle_dir).map_err(io_err(&bundle_dir))?;
        let rec = PluginRecord {
            id: id.clone(),
            manifest,
            host: self.cfg.host.clone(),
            port: Some(port),
            state: PluginState::Created,
            trained: false,
            bundle_dir,
            work_dir,
            handle: None,
        };
        reg.plugins.insert(id, rec.clone());
        reg.save(&self.cfg.root).map_err(io_err(&self.cfg.root))?;
        tracing::info!(plugin = %rec.id, port, "plugin registered");
        Ok(rec)
    }

    /// Starts the sandbox of a `Created` or `Stopped` instance.
    async fn start_sandbox(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        let lock = self.plugin_lock(id);
        let _guard = lock.lock().await;
        self.start_locked(id).await
    }

    async fn start_locked(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        let rec = self.record(id)?;
        if !rec.state.can_become(PluginState::Running) {
            return Err(ControllerError::IllegalTransition {
                id: id.to_string(),
                from: rec.state,
                to: PluginState::Running,
            });
        }
        let spec = self.spec(&rec);
        let handle = self.runtime.start(&spec).await?;
        if let Err(detail) = self.wait_ready(&rec, &handle).await {
            let _ = self.runtime.stop(&handle, self.cfg.stop_grace).await;
            if rec.state == PluginState::Created {
                // A sandbox that never came up leaves nothing behind.
                self.update(id, |r| {
                    r.state = PluginState::Deleted;
                    r.port = None;
                })?;
                let _ = fs::remove_dir_all(rec.work_dir.parent().unwrap_or(&rec.work_dir));
            }
            return Err(ControllerError::StartupTimeout {
                id: id.to_string(),
                secs: self.cfg.startup_timeout.as_secs_f64(),
                detail,
            });
        }
        let rec = self.transition(id, PluginState::Running, |r| r.handle = Some(handle))?;
        tracing::info!(plugin = %id, endpoint = %rec.endpoint(), "plugin running");
        Ok(rec.view())
    }

    async fn wait_ready(&self, rec: &PluginRecord, handle: &SandboxHandle) -> Result<(), String> {
        let url = format!("http://{}/health", rec.endpoint());
        let deadline = Instant::now() + self.cfg.startup_timeout;
        let mut last = String::from("no answer");
        while Instant::now() < deadline {
            if !self.runtime.is_alive(handle) {
                return Err(format!("sandbox exited during startup{}", log_tail(&rec.work_dir)));
            }
            match self.http.get(&url).timeout(Duration::from_millis(500)).send().await {
                Ok(resp) if resp.status().is_success() => match resp.json::<HealthReply>().await {
                    Ok(h) if h.status == "ok" => return Ok(()),
                    Ok(h) => last = format!("health status `{}`", h.status),
                    Err(e) => last = format!("malformed health reply: {e}"),
                },
                Ok(resp) => last = format!("health returned HTTP {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        Err(last)
    }

    /// Stops a running instance, keeping its port and files.
    pub async fn stop(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        let lock = self.plugin_lock(id);
        let _guard = lock.lock().await;
        self.stop_locked(id).await.map(|r| r.view())
    }

    async fn stop_locked(&self, id: &str) -> Result<PluginRecord, ControllerError> {
        let rec = self.record(id)?;
        if !rec.state.can_become(PluginState::Stopped) {
            return Err(ControllerError::IllegalTransition {
                id: id.to_string(),
                from: rec.state,
                to: PluginState::Stopped,
            });
        }
        if let Some(h) = &rec.handle {
            self.runtime.stop(h, self.cfg.stop_grace).await?;
        }
        self.transition(id, PluginState::Stopped, |r| r.handle = None)
    }

    /// Starts a stopped instance, or cycles a running one.
    pub async fn restart(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        let lock = self.plugin_lock(id);
        let _guard = lock.lock().await;
        if self.record(id)?.state == PluginState::Running {
            self.stop_locked(id).await?;
        }
        self.start_locked(id).await
    }

    /// Tears down the sandbox, frees the port and deletes the instance's
    /// files. Experiment results are kept.
    pub async fn remove(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        let lock = self.plugin_lock(id);
        let _guard = lock.lock().await;
        let rec = self.record(id)?;
        if !rec.state.can_become(PluginState::Deleted) {
            return Err(ControllerError::IllegalTransition {
                id: id.to_string(),
                from: rec.state,
                to: PluginState::Deleted,
            });
        }
        if let Some(h) = &rec.handle {
            if self.runtime.is_alive(h) {
                self.runtime.stop(h, self.cfg.stop_grace).await?;
            }
        }
        let rec = self.transition(id, PluginState::Deleted, |r| {
            r.handle = None;
            r.port = None;
        })?;
        if let Some(plugin_dir) = rec.work_dir.parent() {
            let _ = fs::remove_dir_all(plugin_dir);
        }
        tracing::info!(plugin = %id, "plugin removed");
        Ok(rec.view())
    }

    fn result_path(&self, experiment_id: &str) -> PathBuf {
        self.cfg.root.join("results").join(format!("{experiment_id}.json"))
    }

    fn persist_result(&self, result: &ExperimentResult) -> Result<(), ControllerError> {
        let path = self.result_path(&result.experiment_id);
        let bytes = serde_json::to_vec_pretty(result).expect("result serializes");
        write_atomic(&path, &bytes).map_err(io_err(&path))
    }

    pub fn result(&self, experiment_id: &str) -> Result<ExperimentResult, ControllerError> {
        let path = self.result_path(experiment_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(ControllerError::UnknownExperiment(experiment_id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_str(&text).map_err(|e| io_err(&path)(io::Error::new(io::ErrorKind::InvalidData, e)))
    }

    /// All stored results, oldest first.
    pub fn results(&self) -> Result<Vec<ExperimentResult>, ControllerError> {
        let dir = self.cfg.root.join("results");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                    out.push(self.result(id)?);
                }
            }
        }
        out.sort_by(|a, b| (a.finished_at, &a.experiment_id).cmp(&(b.finished_at, &b.experiment_id)));
        Ok(out)
    }

    fn running_record(&self, id: &str) -> Result<PluginRecord, ControllerError> {
        let rec = self.record(id)?;
        if rec.state != PluginState::Running {
            return Err(ControllerError::PluginUnreachable {
                id: id.to_string(),
                detail: format!("plugin is {}", rec.state),
            });
        }
        Ok(rec)
    }

    /// Marks the instance stopped if its sandbox died (e.g. a crash
    /// mid-phase). A dying process may take a moment to disappear after its
    /// connections drop, so liveness is watched briefly.
    async fn note_liveness(&self, rec: &PluginRecord) {
        if let Some(h) = &rec.handle {
            let deadline = Instant::now() + Duration::from_millis(500);
            while self.runtime.is_alive(h) && Instant::now() < deadline {
                tokio::time::sleep(Duration::from_millis(20)).await;
            }
            if !self.runtime.is_alive(h) {
                tracing::warn!(plugin = %rec.id, "sandbox is gone; marking stopped");
                let _ = self.update(&rec.id, |r| {
                    r.state = PluginState::Stopped;
                    r.handle = None;
                });
            }
        }
    }

    /// Slices the dataset, hands it to the sandbox, invokes the phase and
    /// validates and stores the outcome.
    ///
    /// Failures after the plugin was invoked are stored as `failed` results
    /// (partial output is discarded) and reported as errors.
    pub async fn run_experiment(
        &self,
        req: &ExperimentRequest,
        source: &dyn TelemetrySource,
    ) -> Result<ExperimentResult, ControllerError> {
        let lock = self.plugin_lock(&req.plugin_id);
        let _guard = lock.lock().await;
        let rec = self.running_record(&req.plugin_id)?;
        let mode = rec.manifest.deployment_mode;
        let allowed = match mode {
            DeploymentMode::Online => matches!(req.phase, Phase::Train | Phase::Test),
            DeploymentMode::Batch => req.phase == Phase::Run,
        };
        if !allowed {
            return Err(ControllerError::PhaseNotAllowed {
                id: rec.id,
                phase: req.phase,
                mode,
            });
        }
        if req.phase == Phase::Test && !rec.trained {
            return Err(ControllerError::PhaseOrder { id: rec.id });
        }
        if !is_identifier(&req.experiment_id) {
            return Err(ControllerError::InvalidId(req.experiment_id.clone()));
        }
        if self.result_path(&req.experiment_id).exists() {
            return Err(ControllerError::DuplicateExperiment(req.experiment_id.clone()));
        }

        let batch = source.batch_for(&req.window)?;
        let dataset_hash = batch.content_hash();
        let host_dir = rec.work_dir.join("data").join(&req.experiment_id);
        let export_dir = host_dir.clone();
        tokio::task::spawn_blocking(move || export_csv(&batch, &export_dir))
            .await
            .expect("export task does not panic")
            .map_err(|e| ControllerError::Io {
                path: host_dir.clone(),
                source: io::Error::other(e.to_string()),
            })?;
        let spec = self.spec(&rec);
        let body = PhaseRequest {
            experiment_id: req.experiment_id.clone(),
            data_dir: self.runtime.sandbox_path(&spec, &host_dir),
            config: rec.manifest.config.clone().into_iter().collect::<Map<_, _>>(),
        };

        let url = format!("http://{}{}", rec.endpoint(), req.phase.route());
        tracing::info!(plugin = %rec.id, experiment = %req.experiment_id, phase = %req.phase, "invoking plugin");
        let started = Instant::now();
        let sent = self.http.post(&url).json(&body).timeout(self.cfg.phase_timeout).send().await;
        let mut result = ExperimentResult {
            experiment_id: req.experiment_id.clone(),
            plugin_id: rec.id.clone(),
            phase: req.phase,
            metric_kind: rec.manifest.metric_kind,
            window: req.window.clone(),
            data_dir: body.data_dir.clone(),
            dataset_hash,
            payload: None,
            wall_time: 0.0,
            status: ResultStatus::Failed,
            failure_reason: None,
            finished_at: 0,
        };
        let outcome = match sent {
            Err(e) if e.is_connect() => {
                self.note_liveness(&rec).await;
                return Err(ControllerError::PluginUnreachable {
                    id: rec.id,
                    detail: e.to_string(),
                });
            }
            Err(e) if e.is_timeout() => Err(format!("no reply within {:.0}s", self.cfg.phase_timeout.as_secs_f64())),
            Err(e) => Err(format!("plugin dropped the connection: {e}")),
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().await.unwrap_or_default();
                if !status.is_success() {
                    Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))
                } else {
                    serde_json::from_str::<PhaseReply>(&text).map_err(|e| format!("malformed reply: {e}"))
                }
            }
        };
        result.wall_time = started.elapsed().as_secs_f64();
        result.finished_at = unix_now();

        let failure = match outcome {
            Err(reason) => {
                self.note_liveness(&rec).await;
                Some(ControllerError::PluginFailure {
                    experiment_id: req.experiment_id.clone(),
                    reason,
                })
            }
            Ok(reply) if reply.status == ReplyStatus::Failed => Some(ControllerError::PluginFailure {
                experiment_id: req.experiment_id.clone(),
                reason: reply.reason.unwrap_or_else(|| "plugin reported failure".into()),
            }),
            Ok(reply) => {
                let invalid = match (&reply.payload, req.phase.yields_payload()) {
                    (_, false) => None,
                    (None, true) => Some(("payload".to_string(), "missing".to_string())),
                    (Some(p), true) => parse_result_payload(p, rec.manifest.metric_kind)
                        .err()
                        .map(|e| (e.path, e.message)),
                };
                match invalid {
                    Some((path, message)) => Some(ControllerError::PayloadInvalid {
                        experiment_id: req.experiment_id.clone(),
                        path,
                        message,
                    }),
                    None => {
                        result.payload = reply.payload;
                        None
                    }
                }
            }
        };
        match failure {
            Some(err) => {
                result.failure_reason = Some(err.to_string());
                self.persist_result(&result)?;
                tracing::warn!(experiment = %req.experiment_id, "{err}");
                Err(err)
            }
            None => {
                result.status = ResultStatus::Ok;
                self.persist_result(&result)?;
                if req.phase == Phase::Train {
                    self.update(&rec.id, |r| r.trained = true)?;
                }
                Ok(result)
            }
        }
    }

    /// Asks the plugin to drop its temporary files for `experiment_id` and
    /// removes the delivered dataset. Idempotent.
    pub async fn clear(&self, id: &str, experiment_id: &str) -> Result<(), ControllerError> {
        let lock = self.plugin_lock(id);
        let _guard = lock.lock().await;
        let rec = self.running_record(id)?;
        let host_dir = rec.work_dir.join("data").join(experiment_id);
        let body = PhaseRequest {
            experiment_id: experiment_id.to_string(),
            data_dir: self.runtime.sandbox_path(&self.spec(&rec), &host_dir),
            config: rec.manifest.config.clone().into_iter().collect(),
        };
        let url = format!("http://{}/clear", rec.endpoint());
        let resp = match self.http.post(&url).json(&body).timeout(self.cfg.phase_timeout).send().await {
            Ok(resp) => resp,
            Err(e) => {
                self.note_liveness(&rec).await;
                return Err(ControllerError::PluginUnreachable {
                    id: id.to_string(),
                    detail: e.to_string(),
                });
            }
        };
        let reply: PhaseReply = resp.json().await.map_err(|e| ControllerError::PluginFailure {
            experiment_id: experiment_id.to_string(),
            reason: format!("malformed clear reply: {e}"),
        })?;
        if reply.status == ReplyStatus::Failed {
            return Err(ControllerError::PluginFailure {
                experiment_id: experiment_id.to_string(),
                reason: reply.reason.unwrap_or_default(),
            });
        }
        if host_dir.exists() {
            fs::remove_dir_all(&host_dir).map_err(io_err(&host_dir))?;
        }
        Ok(())
    }

    /// Brings the registry in line with reality: running instances whose
    /// sandbox is gone become `Stopped`; live sandboxes of instances that are
    /// not running are terminated.
    pub async fn reconcile(&self) -> Result<ReconcileReport, ControllerError> {
        let mut report = ReconcileReport::default();
        let records: Vec<PluginRecord> = self.registry.lock().unwrap().plugins.values().cloned().collect();
        for rec in records {
            let alive = rec.handle.as_ref().is_some_and(|h| self.runtime.is_alive(h));
            if rec.state == PluginState::Running && !alive {
                self.update(&rec.id, |r| {
                    r.state = PluginState::Stopped;
                    r.handle = None;
                })?;
                report.marked_stopped.push(rec.id);
            } else if rec.state != PluginState::Running && alive {
                if let Some(h) = &rec.handle {
                    self.runtime.stop(h, self.cfg.stop_grace).await?;
                }
                self.update(&rec.id, |r| r.handle = None)?;
                report.terminated.push(rec.id);
            }
        }
        Ok(report)
    }

    /// Ids of instances in state `Running`.
    pub fn running_ids(&self) -> Vec<String> {
        self.registry
            .lock()
            .unwrap()
            .plugins
            .values()
            .filter(|r| r.state == PluginState::Running)
            .map(|r| r.id.clone())
            .collect()
    }

    /// Ids of instances whose sandbox is actually alive.
    pub fn live_sandbox_ids(&self) -> Vec<String> {
        let records: Vec<PluginRecord> = self.registry.lock().unwrap().plugins.values().cloned().collect();
        records
            .into_iter()
            .filter(|r| r.handle.as_ref().is_some_and(|h| self.runtime.is_alive(h)))
            .map(|r| r.id)
            .collect()
    }

    /// Stops every running instance.
    pub async fn shutdown(&self) -> Result<(), ControllerError> {
        for id in self.running_ids() {
            self.stop(&id).await?;
        }
        Ok(())
    }
}

fn log_tail(work_dir: &Path) -> String {
    match fs::read_to_string(work_dir.join(SANDBOX_LOG)) {
        Ok(text) if !text.trim().is_empty() => {
            let lines: Vec<&str> = text.lines().collect();
            format!("; log tail: {}", lines[lines.len().saturating_sub(5)..].join(" | "))
        }
        _ => String::new(),
    }
}
