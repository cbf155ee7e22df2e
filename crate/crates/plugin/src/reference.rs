//! Reference plugin: a naive 3σ threshold detector over one KPI.
//!
//! `train` fits a mean and standard deviation per entity on the delivered
//! window and stores them in `model/model.json` inside the sandbox working
//! directory. `test` flags every step bucket in which some entity deviates
//! from its mean by more than `sigma` standard deviations. `run` (batch
//! mode) fits and predicts on the same window.
//!
//! Config parameters (all optional):
//!
//! | key        | default          | meaning                                  |
//! |------------|------------------|------------------------------------------|
//! | `kpi`      | `cpu_usage_pct`  | KPI to watch                             |
//! | `sigma`    | `3.0`            | threshold in standard deviations         |
//! | `entity`   | all entities     | restrict to one cmdb_id                  |
//!
//! Test knobs, used to exercise the controller's failure paths:
//! `fail_on` (phase name: reply `failed`), `crash_on` (phase name: exit the
//! process mid-request), `omit_key` (drop a payload key), `sleep_ms`
//! (delay every phase).

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use servo_core::csv_io::import_csv;
use servo_core::TelemetryBatch;

use crate::wire::{HealthReply, Phase, PhaseReply, PhaseRequest, CONTRACT_VERSION, HOST_ENV, PORT_ENV, SANDBOX_PORT};

pub const REFERENCE_NAME: &str = "naive-3sigma";

/// Per-entity statistics of the watched KPI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kpi: String,
    pub stats: BTreeMap<String, (f64, f64)>,
}

impl Model {
    pub fn fit(batch: &TelemetryBatch, kpi: &str, entity: Option<&str>) -> Option<Self> {
        let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for m in batch.metrics.iter().filter(|m| m.kpi_name == kpi) {
            if entity.is_none_or(|e| e == m.cmdb_id) {
                samples.entry(&m.cmdb_id).or_default().push(m.value);
            }
        }
        if samples.is_empty() {
            return None;
        }
        let stats = samples
            .into_iter()
            .map(|(e, v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (e.to_string(), (mean, var.sqrt()))
            })
            .collect();
        Some(Self { kpi: kpi.to_string(), stats })
    }

    /// Largest |z| per step bucket of the batch window (0 where no sample).
    pub fn scores(&self, batch: &TelemetryBatch) -> Vec<f64> {
        let w = &batch.window;
        let mut out = vec![0.0f64; w.ticks()];
        for m in batch.metrics.iter().filter(|m| m.kpi_name == self.kpi && w.contains(m.timestamp)) {
            if let Some((mean, sd)) = self.stats.get(&m.cmdb_id) {
                let z = (m.value - mean).abs() / sd.max(1e-9);
                let slot = &mut out[w.bucket(m.timestamp)];
                *slot = slot.max(z);
            }
        }
        out
    }
}

struct Params {
    kpi: String,
    sigma: f64,
    entity: Option<String>,
}

impl Params {
    fn from(config: &Map<String, Value>) -> Self {
        Self {
            kpi: config.get("kpi").and_then(Value::as_str).unwrap_or("cpu_usage_pct").to_string(),
            sigma: config.get("sigma").and_then(Value::as_f64).unwrap_or(3.0),
            entity: config.get("entity").and_then(Value::as_str).map(str::to_string),
        }
    }
}

fn knob<'a>(config: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    config.get(key).and_then(Value::as_str)
}

#[derive(Debug, Clone)]
pub struct ReferenceState {
    /// Sandbox working directory (model and temp files live here).
    pub work_dir: PathBuf,
}

impl ReferenceState {
    fn model_path(&self) -> PathBuf {
        self.work_dir.join("model").join("model.json")
    }

    fn tmp_dir(&self, experiment_id: &str) -> PathBuf {
        self.work_dir.join("tmp").join(experiment_id)
    }
}

pub fn router(state: ReferenceState) -> Router {
    let state = Arc::new(state);
    Router::new()
        .route("/health", get(health))
        .route("/train", post(|s, b| phase(s, b, Phase::Train)))
        .route("/test", post(|s, b| phase(s, b, Phase::Test)))
        .route("/run", post(|s, b| phase(s, b, Phase::Run)))
        .route("/clear", post(clear))
        .with_state(state)
}

async fn health() -> Json<HealthReply> {
    Json(HealthReply {
        status: "ok".into(),
        name: Some(REFERENCE_NAME.into()),
        contract: Some(CONTRACT_VERSION),
    })
}

async fn phase(State(state): State<Arc<ReferenceState>>, Json(req): Json<PhaseRequest>, phase: Phase) -> Json<PhaseReply> {
    if let Some(ms) = req.config.get("sleep_ms").and_then(Value::as_u64) {
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
    if knob(&req.config, "crash_on") == Some(phase.as_str()) {
        tracing::error!(%phase, "crashing on request");
        std::process::exit(3);
    }
    if knob(&req.config, "fail_on") == Some(phase.as_str()) {
        return Json(PhaseReply::failed(format!("configured to fail on {phase}")));
    }
    let reply = tokio::task::spawn_blocking(move || execute(&state, &req, phase))
        .await
        .unwrap_or_else(|e| PhaseReply::failed(format!("worker panicked: {e}")));
    Json(reply)
}

fn execute(state: &ReferenceState, req: &PhaseRequest, phase: Phase) -> PhaseReply {
    let params = Params::from(&req.config);
    let batch = match import_csv(Path::new(&req.data_dir)) {
        Ok(b) => b,
        Err(e) => return PhaseReply::failed(format!("cannot read dataset: {e}")),
    };
    let fitted = || Model::fit(&batch, &params.kpi, params.entity.as_deref());
    let model = match phase {
        Phase::Train => {
            let Some(model) = fitted() else {
                return PhaseReply::failed(format!("no samples of `{}` in the window", params.kpi));
            };
            let path = state.model_path();
            let saved = fs::create_dir_all(path.parent().expect("model path has a parent"))
                .and_then(|_| fs::write(&path, serde_json::to_vec(&model).expect("model serializes")));
            return match saved {
                Ok(()) => PhaseReply::ok(None),
                Err(e) => PhaseReply::failed(format!("cannot store model: {e}")),
            };
        }
        Phase::Test => match fs::read(state.model_path()).ok().and_then(|b| serde_json::from_slice::<Model>(&b).ok()) {
            Some(m) => m,
            None => return PhaseReply::failed("no trained model"),
        },
        Phase::Run => match fitted() {
            Some(m) => m,
            None => return PhaseReply::failed(format!("no samples of `{}` in the window", params.kpi)),
        },
    };
    let scores = model.scores(&batch);
    // Scratch output, removed again by `clear`.
    let tmp = state.tmp_dir(&req.experiment_id);
    if fs::create_dir_all(&tmp).is_ok() {
        let lines: String = scores.iter().map(|s| format!("{s}\n")).collect();
        let _ = fs::write(tmp.join("scores.txt"), lines);
    }
    let predictions: Vec<u8> = scores.iter().map(|&z| u8::from(z > params.sigma)).collect();
    let w = &batch.window;
    let mut payload = json!({
        "window": {"start": w.start, "end": w.end, "step": w.step},
        "predictions": predictions,
    });
    if let Some(key) = knob(&req.config, "omit_key") {
        payload.as_object_mut().expect("payload is an object").remove(key);
    }
    PhaseReply::ok(Some(payload))
}

async fn clear(State(state): State<Arc<ReferenceState>>, Json(req): Json<PhaseRequest>) -> Json<PhaseReply> {
    let tmp = state.tmp_dir(&req.experiment_id);
    match fs::remove_dir_all(&tmp) {
        Ok(()) => Json(PhaseReply::ok(None)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Json(PhaseReply::ok(None)),
        Err(e) => Json(PhaseReply::failed(e.to_string())),
    }
}

/// Serves the reference plugin on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, state: ReferenceState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "reference plugin listening");
    axum::serve(listener, router(state)).await
}

/// Address and working directory from the sandbox environment.
pub fn from_env() -> (SocketAddr, ReferenceState) {
    let port = std::env::var(PORT_ENV)
        .ok()
        .and_then(|p| p.parse().ok())
        .unwrap_or(SANDBOX_PORT);
    let host = std::env::var(HOST_ENV).unwrap_or_else(|_| "127.0.0.1".into());
    let ip = host.parse().unwrap_or(std::net::Ipv4Addr::LOCALHOST.into());
    let work_dir = std::env::var_os("SERVO_WORK_DIR")
        .map(PathBuf::from)
        .or_else(|| std::env::current_dir().ok())
        .unwrap_or_else(|| PathBuf::from("."));
    (SocketAddr::new(ip, port), ReferenceState { work_dir })
}

#[cfg(test)]
mod tests {
    use super::*;
    use servo_core::faults::{FaultBehavior, FaultCalendar, FaultDefinition, InjectionMode};
    use servo_core::{default_boutique_topology, run_simulation, SimClock, WorkloadProfile};

    #[test]
    fn flags_a_cpu_spike_on_the_target() {
        let topo = default_boutique_topology();
        let t0 = 1_700_000_000;
        let cal = FaultCalendar::from_definitions(
            [(
                FaultDefinition::new("cpu", "cartservice-0", t0 + 600, 300, FaultBehavior::CpuStress { load_pct: 60.0 }),
                InjectionMode::Scheduled,
            )],
            0,
        )
        .unwrap();
        let profile = WorkloadProfile::uniform(&topo, 0.2, 3);
        let batch = run_simulation(&topo, &profile, &cal, &SimClock::new(t0, 15, 1200).unwrap()).unwrap();
        let train = batch.slice(&servo_core::DatasetWindow::new(t0, t0 + 600, 15).unwrap()).unwrap();
        let model = Model::fit(&train, "cpu_usage_pct", Some("cartservice-0")).unwrap();
        let scores = model.scores(&batch);
        let flagged: Vec<bool> = scores.iter().map(|&z| z > 3.0).collect();
        let labels = batch.label_vector();
        let hits = flagged.iter().zip(&labels).filter(|(f, l)| **f && **l).count();
        assert_eq!(hits, labels.iter().filter(|l| **l).count());
    }
}
