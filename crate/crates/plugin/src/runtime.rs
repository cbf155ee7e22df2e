//! Sandbox runtimes. A sandbox owns one plugin server: its own working
//! directory, environment and process tree (or container).
//!
//! [`ProcessRuntime`] runs plugins as local process groups and needs nothing
//! beyond the host OS. [`ContainerRuntime`] drives a Docker-compatible CLI
//! and maps the allocated host port onto the fixed in-sandbox port.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::resolve_program;
use crate::wire::{HOST_ENV, PORT_ENV, SANDBOX_PORT};

/// Name of the combined stdout/stderr log in each sandbox working directory.
pub const SANDBOX_LOG: &str = "sandbox.log";

/// Everything a runtime needs to start one sandbox.
#[derive(Debug, Clone, PartialEq)]
pub struct SandboxSpec {
    pub id: String,
    /// Installed bundle (read-only for the plugin).
    pub bundle_dir: PathBuf,
    /// Writable working directory; datasets are delivered below it.
    pub work_dir: PathBuf,
    pub command: Vec<String>,
    pub host_port: u16,
    pub image: Option<String>,
}

/// Runtime-specific reference to a started sandbox; persisted in the registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SandboxHandle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pid: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("entry program `{0}` not found")]
    MissingProgram(String),
    #[error("cannot start sandbox: {0}")]
    Spawn(String),
    #[error("cannot stop sandbox: {0}")]
    Stop(String),
}

#[async_trait]
pub trait SandboxRuntime: Send + Sync {
    fn kind(&self) -> &'static str;

    async fn start(&self, spec: &SandboxSpec) -> Result<SandboxHandle, RuntimeError>;

    /// Asks the sandbox to stop, escalating to a forced kill after `grace`.
    async fn stop(&self, handle: &SandboxHandle, grace: Duration) -> Result<(), RuntimeError>;

    fn is_alive(&self, handle: &SandboxHandle) -> bool;

    /// How `host_path` (below `spec.work_dir`) appears inside the sandbox.
    fn sandbox_path(&self, spec: &SandboxSpec, host_path: &Path) -> String;
}

/// Runs each plugin as its own process group in its working directory, with
/// a scrubbed environment.
///
/// Sandboxes outlive the runtime by default so that short-lived CLI commands
/// can deploy a plugin and exit; [`ProcessRuntime::owning`] kills them when
/// the runtime is dropped instead.
#[derive(Default)]
pub struct ProcessRuntime {
    children: Mutex<HashMap<u32, Child>>,
    kill_on_drop: bool,
    search_path: Vec<PathBuf>,
}

impl ProcessRuntime {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn owning() -> Self {
        Self {
            children: Mutex::default(),
            kill_on_drop: true,
            search_path: Vec::new(),
        }
    }

    /// Puts `dir` in front of the `PATH` sandboxes see, e.g. so that bundle
    /// scripts find programs installed next to the running executable.
    pub fn with_search_path(mut self, dir: impl Into<PathBuf>) -> Self {
        self.search_path.push(dir.into());
        self
    }

    fn sandbox_path_var(&self) -> Option<std::ffi::OsString> {
        let inherited = std::env::var_os("PATH");
        let dirs = self
            .search_path
            .iter()
            .cloned()
            .chain(inherited.iter().flat_map(std::env::split_paths));
        std::env::join_paths(dirs).ok()
    }

    fn signal_group(pid: u32, signal: i32) {
        // SAFETY: kill(2) has no memory-safety preconditions; a negative pid
        // addresses the process group created at spawn time.
        unsafe {
            libc::kill(-(pid as i32), signal);
        }
    }
}

impl Drop for ProcessRuntime {
    fn drop(&mut self) {
        if !self.kill_on_drop {
            return;
        }
        let children = self.children.get_mut().unwrap_or_else(|e| e.into_inner());
        for (pid, child) in children.iter_mut() {
            Self::signal_group(*pid, libc::SIGKILL);
            let _ = child.wait();
        }
    }
}

/// Environment variables passed through to process sandboxes.
const INHERITED_ENV: [&str; 4] = ["PATH", "HOME", "LANG", "RUST_LOG"];

#[async_trait]
impl SandboxRuntime for ProcessRuntime {
    fn kind(&self) -> &'static str {
        "process"
    }

    async fn start(&self, spec: &SandboxSpec) -> Result<SandboxHandle, RuntimeError> {
        use std::os::unix::process::CommandExt;

        let program = spec.command.first().ok_or_else(|| RuntimeError::MissingProgram(String::new()))?;
        let resolved =
            resolve_program(&spec.bundle_dir, program).ok_or_else(|| RuntimeError::MissingProgram(program.clone()))?;
        let log_path = spec.work_dir.join(SANDBOX_LOG);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| RuntimeError::Spawn(format!("{}: {e}", log_path.display())))?;
        let log_err = log.try_clone().map_err(|e| RuntimeError::Spawn(e.to_string()))?;

        let mut cmd = Command::new(&resolved);
        cmd.args(&spec.command[1..])
            .current_dir(&spec.work_dir)
            .env_clear()
            .envs(INHERITED_ENV.iter().filter_map(|k| std::env::var_os(k).map(|v| (*k, v))))
            .envs(self.sandbox_path_var().map(|p| ("PATH", p)))
            .env(PORT_ENV, spec.host_port.to_string())
            .env(HOST_ENV, "127.0.0.1")
            .env("SERVO_BUNDLE_DIR", &spec.bundle_dir)
            .env("SERVO_WORK_DIR", &spec.work_dir)
            .stdin(Stdio::null())
            .stdout(log)
            .stderr(log_err)
            .process_group(0);
        let child = cmd
            .spawn()
            .map_err(|e| RuntimeError::Spawn(format!("{}: {e}", resolved.display())))?;
        let pid = child.id();
        tracing::debug!(sandbox = %spec.id, pid, "process sandbox started");
        self.children.lock().unwrap().insert(pid, child);
        Ok(SandboxHandle {
            pid: Some(pid),
            container: None,
        })
    }

    async fn stop(&self, handle: &SandboxHandle, grace: Duration) -> Result<(), RuntimeError> {
        let Some(pid) = handle.pid else {
            return Ok(());
        };
        Self::signal_group(pid, libc::SIGTERM);
        let deadline = Instant::now() + grace;
        while self.is_alive(handle) && Instant::now() < deadline {
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        if self.is_alive(handle) {
            tracing::warn!(pid, "sandbox ignored SIGTERM; killing");
            Self::signal_group(pid, libc::SIGKILL);
            let deadline = Instant::now() + Duration::from_secs(5);
            while self.is_alive(handle) {
                if Instant::now() > deadline {
                    return Err(RuntimeError::Stop(format!("process {pid} survived SIGKILL")));
                }
                tokio::time::sleep(Duration::from_millis(20)).await;
            }
        }
        // Leftovers of the group (grandchildren) go down with it.
        Self::signal_group(pid, libc::SIGKILL);
        Ok(())
    }

    fn is_alive(&self, handle: &SandboxHandle) -> bool {
        let Some(pid) = handle.pid else {
            return false;
        };
        let mut children = self.children.lock().unwrap();
        if let Some(child) = children.get_mut(&pid) {
            return match child.try_wait() {
                Ok(None) => true,
                _ => {
                    children.remove(&pid);
                    false
                }
            };
        }
        // Started by an earlier controller process: probe with signal 0.
        // SAFETY: see `signal_group`.
        unsafe { libc::kill(pid as i32, 0) == 0 }
    }

    fn sandbox_path(&self, _spec: &SandboxSpec, host_path: &Path) -> String {
        host_path.display().to_string()
    }
}

/// Drives `docker` (or a compatible CLI such as `podman`).
pub struct ContainerRuntime {
    cli: String,
    default_image: String,
}

/// Where the bundle and the working directory are mounted in a container.
const CONTAINER_BUNDLE: &str = "/plugin";
const CONTAINER_WORK: &str = "/work";

impl ContainerRuntime {
    pub fn new(cli: impl Into<String>, default_image: impl Into<String>) -> Self {
        Self {
            cli: cli.into(),
            default_image: default_image.into(),
        }
    }

    pub fn container_name(id: &str) -> String {
        format!("servo-plugin-{id}")
    }

    /// Arguments of the `run` invocation for `spec`.
    pub fn run_args(&self, spec: &SandboxSpec) -> Vec<String> {
        let mut args = vec![
            "run".to_string(),
            "--detach".into(),
            "--name".into(),
            Self::container_name(&spec.id),
            "--publish".into(),
            format!("127.0.0.1:{}:{SANDBOX_PORT}", spec.host_port),
            "--volume".into(),
            format!("{}:{CONTAINER_BUNDLE}:ro", spec.bundle_dir.display()),
            "--volume".into(),
            format!("{}:{CONTAINER_WORK}", spec.work_dir.display()),
            "--workdir".into(),
            CONTAINER_WORK.into(),
            "--env".into(),
            format!("{PORT_ENV}={SANDBOX_PORT}"),
            "--env".into(),
            format!("{HOST_ENV}=0.0.0.0"),
            spec.image.clone().unwrap_or_else(|| self.default_image.clone()),
        ];
        for (i, part) in spec.command.iter().enumerate() {
            if i == 0 && !part.starts_with('/') && spec.bundle_dir.join(part).is_file() {
                args.push(format!("{CONTAINER_BUNDLE}/{part}"));
            } else {
                args.push(part.clone());
            }
        }
        args
    }

    async fn cli(&self, args: &[String]) -> Result<String, String> {
        let out = tokio::process::Command::new(&self.cli)
            .args(args)
            .output()
            .await
            .map_err(|e| format!("{}: {e}", self.cli))?;
        if out.status.success() {
            Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
        } else {
            Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
        }
    }
}

#[async_trait]
impl SandboxRuntime for ContainerRuntime {
    fn kind(&self) -> &'static str {
        "container"
    }

    async fn start(&self, spec: &SandboxSpec) -> Result<SandboxHandle, RuntimeError> {
        let name = Self::container_name(&spec.id);
        // A stale container from an earlier run would block the name.
        let _ = self.cli(&["rm".into(), "--force".into(), name.clone()]).await;
        self.cli(&self.run_args(spec)).await.map_err(RuntimeError::Spawn)?;
        Ok(SandboxHandle {
            pid: None,
            container: Some(name),
        })
    }

    async fn stop(&self, handle: &SandboxHandle, grace: Duration) -> Result<(), RuntimeError> {
        let Some(name) = &handle.container else {
            return Ok(());
        };
        let secs = grace.as_secs().max(1).to_string();
        self.cli(&["stop".into(), "--time".into(), secs, name.clone()])
            .await
            .map_err(RuntimeError::Stop)?;
        self.cli(&["rm".into(), "--force".into(), name.clone()])
            .await
            .map_err(RuntimeError::Stop)?;
        Ok(())
    }

    fn is_alive(&self, handle: &SandboxHandle) -> bool {
        let Some(name) = &handle.container else {
            return false;
        };
        Command::new(&self.cli)
            .args(["inspect", "--format", "{{.State.Running}}", name])
            .output()
            .map(|o| o.status.success() && String::from_utf8_lossy(&o.stdout).trim() == "true")
            .unwrap_or(false)
    }

    fn sandbox_path(&self, spec: &SandboxSpec, host_path: &Path) -> String {
        match host_path.strip_prefix(&spec.work_dir) {
            Ok(rel) => Path::new(CONTAINER_WORK).join(rel).display().to_string(),
            Err(_) => host_path.display().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dir: &Path, command: &[&str]) -> SandboxSpec {
        SandboxSpec {
            id: "demo-0".into(),
            bundle_dir: dir.join("bundle"),
            work_dir: dir.join("work"),
            command: command.iter().map(|s| s.to_string()).collect(),
            host_port: 18123,
            image: None,
        }
    }

    #[test]
    fn container_args_map_the_fixed_port() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(tmp.path().join("bundle/algorithm")).unwrap();
        std::fs::write(tmp.path().join("bundle/algorithm/run.sh"), "").unwrap();
        let rt = ContainerRuntime::new("docker", "debian:stable-slim");
        let args = rt.run_args(&spec(tmp.path(), &["algorithm/run.sh", "--fast"]));
        assert!(args.contains(&"127.0.0.1:18123:8000".to_string()));
        assert!(args.contains(&"SERVO_PLUGIN_PORT=8000".to_string()));
        assert_eq!(&args[args.len() - 2..], ["/plugin/algorithm/run.sh", "--fast"]);
        let s = spec(tmp.path(), &["x"]);
        assert_eq!(rt.sandbox_path(&s, &s.work_dir.join("data/e1")), "/work/data/e1");
    }

    #[tokio::test]
    async fn process_sandbox_starts_and_stops_its_group() {
        let tmp = tempfile::tempdir().unwrap();
        let s = spec(tmp.path(), &["sh", "-c", "sleep 30 & echo started; wait"]);
        std::fs::create_dir_all(&s.work_dir).unwrap();
        std::fs::create_dir_all(&s.bundle_dir).unwrap();
        let rt = ProcessRuntime::new();
        let h = rt.start(&s).await.unwrap();
        assert!(rt.is_alive(&h));
        tokio::time::sleep(Duration::from_millis(100)).await;
        rt.stop(&h, Duration::from_secs(2)).await.unwrap();
        assert!(!rt.is_alive(&h));
        let log = std::fs::read_to_string(s.work_dir.join(SANDBOX_LOG)).unwrap();
        assert!(log.contains("started"));
    }

    #[tokio::test]
    async fn sigterm_resistant_sandbox_is_killed() {
        let tmp = tempfile::tempdir().unwrap();
        let s = spec(tmp.path(), &["sh", "-c", "trap '' TERM; while true; do sleep 0.05; done"]);
        std::fs::create_dir_all(&s.work_dir).unwrap();
        std::fs::create_dir_all(&s.bundle_dir).unwrap();
        let rt = ProcessRuntime::new();
        let h = rt.start(&s).await.unwrap();
        tokio::time::sleep(Duration::from_millis(100)).await;
        rt.stop(&h, Duration::from_millis(200)).await.unwrap();
        assert!(!rt.is_alive(&h));
    }

    #[tokio::test]
    async fn missing_program_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let s = spec(tmp.path(), &["definitely-not-a-program-xyz"]);
        assert!(matches!(ProcessRuntime::new().start(&s).await, Err(RuntimeError::MissingProgram(_))));
    }
}
