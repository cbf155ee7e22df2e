//! Layered configuration: flags, then `SERVO_*` environment variables (both
//! handled by the argument parser), then the config file, then defaults.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::args::GlobalArgs;
use crate::error::CliError;

/// Config file looked up in the working directory when none is named.
pub const DEFAULT_CONFIG_FILE: &str = "servo.toml";

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Contents of the config file; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_root: Option<PathBuf>,
    pub plugin_root: Option<PathBuf>,
    pub board_store: Option<PathBuf>,
    pub bind: Option<SocketAddr>,
    pub step: Option<u64>,
    pub tolerance: Option<usize>,
    pub port_base: Option<u16>,
    pub seed: Option<u64>,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub data_root: PathBuf,
    pub plugin_root: PathBuf,
    pub board_store: PathBuf,
    pub bind: SocketAddr,
    pub step: u64,
    pub tolerance: usize,
    pub port_base: u16,
    pub seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("servo-data/datasets"),
            plugin_root: PathBuf::from("servo-data/plugins"),
            board_store: PathBuf::from("servo-data/boards"),
            bind: DEFAULT_BIND.parse().expect("default bind address parses"),
            step: 1,
            tolerance: servo_core::scoring::ScoreOptions::default().tolerance,
            port_base: 18000,
            seed: 0,
        }
    }
}

impl CliConfig {
    /// Resolves `args` over the config file over the defaults.
    pub fn resolve(args: &GlobalArgs, bind: Option<SocketAddr>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => read_file(path)?,
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => read_file(Path::new(DEFAULT_CONFIG_FILE))?,
            None => FileConfig::default(),
        };
        Self::layer(args, bind, file)
    }

    /// Applies flags/environment (`args`, `bind`) over `file` over defaults.
    pub fn layer(args: &GlobalArgs, bind: Option<SocketAddr>, file: FileConfig) -> Result<Self, CliError> {
        let d = Self::default();
        let cfg = Self {
            data_root: args.data_root.clone().or(file.data_root).unwrap_or(d.data_root),
            plugin_root: args.plugin_root.clone().or(file.plugin_root).unwrap_or(d.plugin_root),
            board_store: args.board_store.clone().or(file.board_store).unwrap_or(d.board_store),
            bind: bind.or(file.bind).unwrap_or(d.bind),
            step: args.step.or(file.step).unwrap_or(d.step),
            tolerance: args.tolerance.or(file.tolerance).unwrap_or(d.tolerance),
            port_base: args.port_base.or(file.port_base).unwrap_or(d.port_base),
            seed: args.seed.or(file.seed).unwrap_or(d.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.port_base < 1024 {
            return Err(CliError::Config(format!(
                "port base {} is in the privileged range (must be at least 1024)",
                self.port_base
            )));
        }
        if self.step == 0 {
            return Err(CliError::Config("default step must be positive".into()));
        }
        for (key, path) in [
            ("data_root", &self.data_root),
            ("plugin_root", &self.plugin_root),
            ("board_store", &self.board_store),
        ] {
            if path.as_os_str().is_empty() {
                return Err(CliError::Config(format!("{key} is empty")));
            }
            if path.exists() && !path.is_dir() {
                return Err(CliError::Config(format!("{key} {} is not a directory", path.display())));
            }
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
