//! The plugin operations the service needs, as a trait so that tests can
//! substitute a scripted backend for real sandboxes.

use std::path::Path;

use async_trait::async_trait;
use servo_core::TelemetrySource;
use servo_plugin::{
    ControllerError, DeployOptions, ExperimentRequest, ExperimentResult, PluginController, PluginInstance,
};

#[async_trait]
pub trait PluginBackend: Send + Sync {
    fn list(&self) -> Vec<PluginInstance>;
    fn get(&self, id: &str) -> Result<PluginInstance, ControllerError>;
    async fn deploy(&self, bundle: &Path, opts: DeployOptions) -> Result<PluginInstance, ControllerError>;
    async fn stop(&self, id: &str) -> Result<PluginInstance, ControllerError>;
    async fn restart(&self, id: &str) -> Result<PluginInstance, ControllerError>;
    async fn remove(&self, id: &str) -> Result<PluginInstance, ControllerError>;
    async fn run_experiment(
        &self,
        req: &ExperimentRequest,
        source: &dyn TelemetrySource,
    ) -> Result<ExperimentResult, ControllerError>;
    async fn clear(&self, id: &str, experiment_id: &str) -> Result<(), ControllerError>;
    /// A stored result, including failed ones.
    fn result(&self, experiment_id: &str) -> Result<ExperimentResult, ControllerError>;
}

#[async_trait]
impl PluginBackend for PluginController {
    fn list(&self) -> Vec<PluginInstance> {
        PluginController::list(self)
    }

    fn get(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        PluginController::get(self, id)
    }

    async fn deploy(&self, bundle: &Path, opts: DeployOptions) -> Result<PluginInstance, ControllerError> {
        PluginController::deploy(self, bundle, opts).await
    }

    async fn stop(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        PluginController::stop(self, id).await
    }

    async fn restart(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        PluginController::restart(self, id).await
    }

    async fn remove(&self, id: &str) -> Result<PluginInstance, ControllerError> {
        PluginController::remove(self, id).await
    }

    async fn run_experiment(
        &self,
        req: &ExperimentRequest,
        source: &dyn TelemetrySource,
    ) -> Result<ExperimentResult, ControllerError> {
        PluginController::run_experiment(self, req, source).await
    }

    async fn clear(&self, id: &str, experiment_id: &str) -> Result<(), ControllerError> {
        PluginController::clear(self, id, experiment_id).await
    }

    fn result(&self, experiment_id: &str) -> Result<ExperimentResult, ControllerError> {
        PluginController::result(self, experiment_id)
    }
}
