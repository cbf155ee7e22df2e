//! Simulated datasets on disk.
//!
//! Each dataset is a directory below the data root holding the CSV export of
//! one simulation run plus a [`DatasetInfo`] summary in
//! [`DATASET_INFO_FILE`]. Everything written is a pure function of the
//! simulation inputs, so two runs with the same inputs produce identical
//! trees.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use servo_core::csv_io::{export_csv, import_csv};
use servo_core::faults::PlanEntry;
use servo_core::{run_simulation, DatasetWindow, FaultCalendar, ServiceTopology, SimClock, TelemetryBatch, WorkloadProfile};

use crate::error::{io_err, BoardError};
use crate::store::write_atomic;

/// Summary file written next to the CSV export.
pub const DATASET_INFO_FILE: &str = "servo-dataset.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub window: DatasetWindow,
    pub seed: u64,
    /// Faults of the calendar that overlap the window.
    pub faults: Vec<PlanEntry>,
    pub cases: usize,
    pub metric_rows: usize,
    pub log_rows: usize,
    pub span_rows: usize,
    /// Content hash of the whole batch.
    pub content_hash: String,
}

/// Runs a simulation and exports it to `dir`, returning the summary that was
/// written alongside.
pub fn simulate_into(
    dir: &Path,
    name: &str,
    topology: &ServiceTopology,
    profile: &WorkloadProfile,
    calendar: &FaultCalendar,
    clock: &SimClock,
) -> Result<DatasetInfo, BoardError> {
    let batch = run_simulation(topology, profile, calendar, clock)?;
    let window = clock.window();
    let faults = calendar
        .entries()
        .iter()
        .filter(|e| e.fault.start_time < window.end && e.fault.end_time() > window.start)
        .map(|e| PlanEntry::from_definition(&e.fault, e.mode))
        .collect();
    let info = DatasetInfo {
        name: name.to_string(),
        window,
        seed: profile.seed,
        faults,
        cases: batch.ground_truth.cases.len(),
        metric_rows: batch.metrics.len(),
        log_rows: batch.logs.len(),
        span_rows: batch.spans.len(),
        content_hash: batch.content_hash(),
    };
    export_csv(&batch, dir)?;
    let path = dir.join(DATASET_INFO_FILE);
    let text = serde_json::to_vec_pretty(&info).expect("dataset info serializes");
    write_atomic(&path, &text).map_err(io_err(&path))?;
    Ok(info)
}

/// The datasets below one data root. Imported batches are cached in memory.
pub struct DatasetStore {
    root: PathBuf,
    cache: Mutex<HashMap<String, Arc<TelemetryBatch>>>,
}

impl DatasetStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            cache: Mutex::default(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.path(name).join(DATASET_INFO_FILE).is_file()
    }

    pub fn info(&self, name: &str) -> Result<DatasetInfo, BoardError> {
        let path = self.path(name).join(DATASET_INFO_FILE);
        let text = match fs::read(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(BoardError::UnknownDataset(name.into())),
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_slice(&text).map_err(|e| BoardError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    /// Every dataset, ordered by name.
    pub fn list(&self) -> Result<Vec<DatasetInfo>, BoardError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&self.root)(e)),
        };
        let mut names: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| self.contains(n))
            .collect();
        names.sort();
        names.iter().map(|n| self.info(n)).collect()
    }

    /// The full batch of dataset `name`.
    pub fn batch(&self, name: &str) -> Result<Arc<TelemetryBatch>, BoardError> {
        if let Some(b) = self.cache.lock().unwrap().get(name) {
            return Ok(b.clone());
        }
        if !self.contains(name) {
            return Err(BoardError::UnknownDataset(name.into()));
        }
        let batch = Arc::new(import_csv(&self.path(name))?);
        self.cache.lock().unwrap().insert(name.to_string(), batch.clone());
        Ok(batch)
    }

    /// Simulates into a new dataset `name`.
    pub fn simulate(
        &self,
        name: &str,
        topology: &ServiceTopology,
        profile: &WorkloadProfile,
        calendar: &FaultCalendar,
        clock: &SimClock,
    ) -> Result<DatasetInfo, BoardError> {
        if self.path(name).exists() {
            return Err(BoardError::DuplicateDataset(name.into()));
        }
        let dir = self.path(name);
        let result = simulate_into(&dir, name, topology, profile, calendar, clock);
        if result.is_err() {
            let _ = fs::remove_dir_all(&dir);
        }
        result
    }
}
