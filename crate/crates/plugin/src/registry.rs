//! Persistent record of deployed plugin instances and their lifecycle.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::manifest::PluginManifest;
use crate::runtime::SandboxHandle;

/// File name of the registry below the controller root.
pub const REGISTRY_FILE: &str = "registry.json";

/// Lifecycle of an instance:
///
/// ```text
/// Created ──► Running ◄──► Stopped
///    │           │            │
///    └───────────┴────────────┴──► Deleted (terminal)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PluginState {
    Created,
    Running,
    Stopped,
    Deleted,
}

impl PluginState {
    pub fn can_become(self, next: PluginState) -> bool {
        use PluginState::*;
        matches!(
            (self, next),
            (Created, Running) | (Running, Stopped) | (Stopped, Running) | (Created | Running | Stopped, Deleted)
        )
    }
}

impl fmt::Display for PluginState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Public view of a deployed plugin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginInstance {
    pub id: String,
    pub manifest: PluginManifest,
    /// `host:port` the controller talks to.
    pub endpoint: String,
    pub state: PluginState,
    /// An online plugin has completed `train` at least once.
    pub trained: bool,
}

/// Registry entry: the public view plus controller-side bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginRecord {
    pub id: String,
    pub manifest: PluginManifest,
    pub host: String,
    /// Host-side port; `None` once released.
    pub port: Option<u16>,
    pub state: PluginState,
    pub trained: bool,
    pub bundle_dir: PathBuf,
    pub work_dir: PathBuf,
    #[serde(default)]
    pub handle: Option<SandboxHandle>,
}

impl PluginRecord {
    pub fn endpoint(&self) -> String {
        match self.port {
            Some(p) => format!("{}:{p}", self.host),
            None => String::new(),
        }
    }

    pub fn view(&self) -> PluginInstance {
        PluginInstance {
            id: self.id.clone(),
            manifest: self.manifest.clone(),
            endpoint: self.endpoint(),
            state: self.state,
            trained: self.trained,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub plugins: BTreeMap<String, PluginRecord>,
}

impl Registry {
    pub fn load(root: &Path) -> io::Result<Self> {
        let path = root.join(REGISTRY_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    /// Writes atomically (temp file + rename).
    pub fn save(&self, root: &Path) -> io::Result<()> {
        write_atomic(&root.join(REGISTRY_FILE), &serde_json::to_vec_pretty(self)?)
    }

    /// Ports held by instances that are not deleted.
    pub fn ports_in_use(&self) -> impl Iterator<Item = u16> + '_ {
        self.plugins
            .values()
            .filter(|r| r.state != PluginState::Deleted)
            .filter_map(|r| r.port)
    }

    /// Lowest unused `<name>-<n>` id.
    pub fn fresh_id(&self, name: &str) -> String {
        (0..)
            .map(|n| format!("{name}-{n}"))
            .find(|id| !self.plugins.contains_key(id))
            .expect("unbounded id space")
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}
