//! Algorithm hot-plugging for the servo evaluation framework.
//!
//! Algorithms ship as bundles (a manifest plus their code), are deployed
//! into isolated sandboxes by the [`controller::PluginController`], and are
//! driven over a small HTTP contract ([`wire`]). Results come back as JSON
//! payloads that are validated against the plugin's metric kind and stored.
//!
//! [`reference`] holds a naive 3σ detector that doubles as SDK example and
//! test double.

pub mod bundle;
pub mod controller;
pub mod manifest;
pub mod reference;
pub mod registry;
pub mod runtime;
pub mod wire;

pub use controller::{
    ControllerConfig, ControllerError, DeployOptions, ExperimentRequest, ExperimentResult, PluginController,
    ResultStatus,
};
pub use manifest::{DeploymentMode, ManifestError, PluginManifest};
pub use registry::{PluginInstance, PluginState};
pub use runtime::{ContainerRuntime, ProcessRuntime, SandboxRuntime};
pub use wire::Phase;
