//! Shared fixtures: a scripted plugin backend and a small simulated dataset.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde_json::json;
use servo_board::{PluginBackend, ScenarioSpec, Service, ServiceConfig, SimulateSpec};
use servo_core::faults::PlanEntry;
use servo_core::{DatasetWindow, SimClock, TaskType, TelemetrySource};
use servo_plugin::registry::PluginState;
use servo_plugin::{
    ControllerError, DeployOptions, DeploymentMode, ExperimentRequest, ExperimentResult, Phase, PluginInstance,
    PluginManifest, ResultStatus,
};

pub const T0: i64 = 1_700_000_000;

/// What a scripted plugin does when invoked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    /// Predicts the labels exactly.
    Perfect,
    /// Predicts the labels shifted later by this many ticks.
    Lagged(usize),
    /// Predicts nothing anomalous.
    Silent,
    /// Reports a failure on every phase.
    Crash,
}

struct Entry {
    instance: PluginInstance,
    behavior: Behavior,
}

#[derive(Default)]
pub struct FakeBackend {
    plugins: Mutex<BTreeMap<String, Entry>>,
    results: Mutex<HashMap<String, ExperimentResult>>,
    /// `(plugin, phase)` of every invocation, in order.
    pub calls: Mutex<Vec<(String, Phase)>>,
}

pub fn manifest(name: &str, mode: DeploymentMode) -> PluginManifest {
    let mode = match mode {
        DeploymentMode::Online => "online",
        DeploymentMode::Batch => "batch",
    };
    PluginManifest::parse(&format!(
        "name = \"{name}\"\ntask_type = \"AD\"\ndeployment_mode = \"{mode}\"\nmetric_kind = \"PointPRF1\"\n\
         [entry]\ncommand = [\"run.sh\"]\n"
    ))
    .unwrap()
}

impl FakeBackend {
    pub fn add(&self, id: &str, behavior: Behavior, mode: DeploymentMode) {
        let instance = PluginInstance {
            id: id.into(),
            manifest: manifest(&format!("fake-{behavior:?}").replace(['(', ')'], "").to_lowercase(), mode),
            endpoint: "127.0.0.1:1".into(),
            state: PluginState::Running,
            trained: false,
        };
        self.plugins.lock().unwrap().insert(id.into(), Entry { instance, behavior });
    }

    pub fn calls_of(&self, id: &str) -> usize {
        self.calls.lock().unwrap().iter().filter(|(p, _)| p == id).count()
    }

    fn transition(&self, id: &str, to: PluginState) -> Result<PluginInstance, ControllerError> {
        let mut plugins = self.plugins.lock().unwrap();
        let e = plugins.get_mut(id).ok_or_else(|| ControllerError::UnknownPlugin(id.into()))?;
        if !e.instance.state.can_become(to) {
            return Err(ControllerError::IllegalTransition {
                id: id.into(),
                from: e.instance.state,
                to,
            });
        }
        e.instance.state = to;
        Ok(e.instance.clone())
    }
}

fn predictions(labels: &[bool], behavior: Behavior) -> Vec<u8> {
    (0..labels.len())
        .map(|i| match behavior {
            Behavior::Perfect => labels[i],
            Behavior::Lagged(k) => i >= k && labels[i - k],
            Behavior::Silent | Behavior::Crash => false,
        })
        .map(u8::from)
        .collect()
}

#[async_trait]
impl PluginBackend for FakeBackend {
    fn list(&self) -> Vec<PluginInstance> {
        self.plugins.lock().unwrap().values().map(|e| e.instance.clone()).collect()
    }

    fn get(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        self.plugins
            .lock()
            .unwrap()
            .get(id)
            .map(|e| e.instance.clone())
            .ok_or_else(|| ControllerError::UnknownPlugin(id.into()))
    }

    async fn deploy(&self, bundle: &Path, opts: DeployOptions) -> Result<PluginInstance, ControllerError> {
        let manifest = servo_plugin::bundle::read_manifest(bundle)??;
        let id = opts.id.unwrap_or_else(|| format!("{}-0", manifest.name));
        if self.plugins.lock().unwrap().contains_key(&id) {
            return Err(ControllerError::DuplicatePlugin(id));
        }
        self.add(&id, Behavior::Perfect, manifest.deployment_mode);
        self.get(&id)
    }

    async fn stop(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        self.transition(id, PluginState::Stopped)
    }

    async fn restart(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        let state = self.get(id)?.state;
        if state == PluginState::Running {
            return self.get(id);
        }
        self.transition(id, PluginState::Running)
    }

    async fn remove(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        self.transition(id, PluginState::Deleted)
    }

    async fn run_experiment(
        &self,
        req: &ExperimentRequest,
        source: &dyn TelemetrySource,
    ) -> Result<ExperimentResult, ControllerError> {
        let (instance, behavior) = {
            let plugins = self.plugins.lock().unwrap();
            let e = plugins
                .get(&req.plugin_id)
                .ok_or_else(|| ControllerError::UnknownPlugin(req.plugin_id.clone()))?;
            (e.instance.clone(), e.behavior)
        };
        if instance.state != PluginState::Running {
            return Err(ControllerError::PluginUnreachable {
                id: instance.id,
                detail: "not running".into(),
            });
        }
        if req.phase == Phase::Test && !instance.trained {
            return Err(ControllerError::PhaseOrder { id: instance.id });
        }
        if self.results.lock().unwrap().contains_key(&req.experiment_id) {
            return Err(ControllerError::DuplicateExperiment(req.experiment_id.clone()));
        }
        self.calls.lock().unwrap().push((req.plugin_id.clone(), req.phase));
        let batch = source.batch_for(&req.window)?;
        let w = &batch.window;
        let payload = (req.phase != Phase::Train).then(|| {
            json!({
                "window": {"start": w.start, "end": w.end, "step": w.step},
                "predictions": predictions(&batch.label_vector(), behavior),
            })
        });
        let mut result = ExperimentResult {
            experiment_id: req.experiment_id.clone(),
            plugin_id: req.plugin_id.clone(),
            phase: req.phase,
            metric_kind: instance.manifest.metric_kind,
            window: req.window.clone(),
            data_dir: format!("/work/data/{}", req.experiment_id),
            dataset_hash: batch.content_hash(),
            payload,
            wall_time: 0.01,
            status: ResultStatus::Ok,
            failure_reason: None,
            finished_at: 0,
        };
        if behavior == Behavior::Crash {
            let err = ControllerError::PluginFailure {
                experiment_id: req.experiment_id.clone(),
                reason: "plugin dropped the connection".into(),
            };
            result.payload = None;
            result.status = ResultStatus::Failed;
            result.failure_reason = Some(err.to_string());
            self.results.lock().unwrap().insert(req.experiment_id.clone(), result);
            return Err(err);
        }
        if req.phase == Phase::Train {
            self.plugins.lock().unwrap().get_mut(&req.plugin_id).unwrap().instance.trained = true;
        }
        self.results.lock().unwrap().insert(req.experiment_id.clone(), result.clone());
        Ok(result)
    }

    async fn clear(&self, id: &str, _experiment_id: &str) -> Result<(), ControllerError> {
        self.get(id).map(|_| ())
    }

    fn result(&self, experiment_id: &str) -> Result<ExperimentResult, ControllerError> {
        self.results
            .lock()
            .unwrap()
            .get(experiment_id)
            .cloned()
            .ok_or_else(|| ControllerError::UnknownExperiment(experiment_id.into()))
    }
}

/// A service over temporary directories with a clock fixed before `T0`.
pub fn service(dir: &Path, backend: Arc<FakeBackend>) -> Service {
    let cfg = ServiceConfig::new(dir.join("state"), dir.join("data"));
    Service::open(cfg, backend).unwrap().with_clock(|| T0 - 3600)
}

pub fn cpu_fault(start: i64, duration: u64) -> PlanEntry {
    serde_json::from_value(json!({
        "type": "CpuStress",
        "target": "cartservice-0",
        "start": start,
        "duration": duration,
        "params": {"load_pct": 70.0},
    }))
    .unwrap()
}

/// Schedules one CpuStress fault and simulates one hour at a 15 s step into
/// dataset `hour`.
pub async fn hour_dataset(svc: &Service) {
    svc.schedule_fault(&cpu_fault(T0 + 2400, 600)).unwrap();
    svc.simulate(&SimulateSpec {
        name: "hour".into(),
        clock: SimClock::new(T0, 15, 3600).unwrap(),
        profile: None,
        seed: Some(7),
        arrival_rate: Some(0.1),
    })
    .await
    .unwrap();
}

pub fn train_window() -> DatasetWindow {
    DatasetWindow::new(T0, T0 + 1800, 15).unwrap()
}

pub fn test_window() -> DatasetWindow {
    DatasetWindow::new(T0 + 1800, T0 + 3600, 15).unwrap()
}

pub fn scenario_spec(name: &str) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        description: "cpu stress on the cart".into(),
        task_type: TaskType::AD,
        dataset: "hour".into(),
        window: test_window(),
        train_window: Some(train_window()),
    }
}
