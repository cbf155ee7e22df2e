//! Plugin manifests (`manifest.toml` at the root of every bundle).
//!
//! ```toml
//! name = "naive-3sigma"
//! task_type = "AD"
//! deployment_mode = "online"
//! metric_kind = "PointPRF1"
//! dependencies = ["servo-core"]
//!
//! [entry]
//! command = ["algorithm/run.sh"]
//!
//! [config]
//! kpi = "cpu_usage_pct"
//! model_dir = "/var/lib/detector"
//! ```
//!
//! Config keys ending in `_dir` name directories and keys ending in `_path`
//! name files; both must hold absolute paths. Every other key is a plain
//! parameter passed through to the plugin untouched.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use servo_core::{MetricKind, TaskType};
use thiserror::Error;

/// File name of the manifest inside a bundle.
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeploymentMode {
    /// Separate `train` and `test` phases; the model persists in the sandbox.
    Online,
    /// A single `run` phase that fits and predicts in one go.
    Batch,
}

impl fmt::Display for DeploymentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeploymentMode::Online => "online",
            DeploymentMode::Batch => "batch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryPoint {
    /// Program and arguments. A relative program is resolved inside the
    /// bundle first, then on `PATH`.
    pub command: Vec<String>,
    /// Image used by container runtimes; ignored by the process runtime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginManifest {
    pub name: String,
    pub task_type: TaskType,
    pub deployment_mode: DeploymentMode,
    pub metric_kind: MetricKind,
    #[serde(default)]
    pub config: BTreeMap<String, Value>,
    /// Declared dependencies. Opaque to the controller: installing them is
    /// the bundle author's job.
    #[serde(default)]
    pub dependencies: Vec<String>,
    pub entry: EntryPoint,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("manifest does not parse: {0}")]
    Parse(String),
    #[error("invalid plugin name `{0}`: use letters, digits, `.`, `_` or `-`")]
    InvalidName(String),
    #[error("metric kind {metric} does not apply to task type {task}")]
    IncompatibleMetric { metric: MetricKind, task: TaskType },
    #[error("config key `{key}`: {message}")]
    ConfigKey { key: String, message: String },
    #[error("entry command is empty")]
    EmptyEntry,
}

/// What a config key denotes, judged by its suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigKeyKind {
    Directory,
    File,
    Parameter,
}

impl ConfigKeyKind {
    pub fn of(key: &str) -> Self {
        if key.ends_with("_dir") {
            ConfigKeyKind::Directory
        } else if key.ends_with("_path") {
            ConfigKeyKind::File
        } else {
            ConfigKeyKind::Parameter
        }
    }
}

/// Letters, digits, `.`, `_` and `-`, starting with a letter or digit.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphanumeric())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

impl PluginManifest {
    /// Parses and validates a manifest document.
    pub fn parse(document: &str) -> Result<Self, ManifestError> {
        let manifest: PluginManifest = toml::from_str(document).map_err(|e| ManifestError::Parse(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if !is_identifier(&self.name) {
            return Err(ManifestError::InvalidName(self.name.clone()));
        }
        if !self.metric_kind.compatible_with(self.task_type) {
            return Err(ManifestError::IncompatibleMetric {
                metric: self.metric_kind,
                task: self.task_type,
            });
        }
        if self.entry.command.first().is_none_or(|p| p.trim().is_empty()) {
            return Err(ManifestError::EmptyEntry);
        }
        for (key, value) in &self.config {
            check_config_entry(key, value)?;
        }
        Ok(())
    }

    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

fn check_config_entry(key: &str, value: &Value) -> Result<(), ManifestError> {
    let kind = ConfigKeyKind::of(key);
    if kind == ConfigKeyKind::Parameter {
        return Ok(());
    }
    let bad = |message: &str| ManifestError::ConfigKey {
        key: key.to_string(),
        message: message.to_string(),
    };
    let Some(text) = value.as_str() else {
        return Err(bad("path keys take a string value"));
    };
    let path = Path::new(text);
    if !path.is_absolute() {
        return Err(bad(&format!("`{text}` is not an absolute path")));
    }
    if kind == ConfigKeyKind::File && (text.ends_with('/') || path.file_name().is_none()) {
        return Err(bad(&format!("`{text}` names a directory, but `_path` keys name files")));
    }
    Ok(())
}
