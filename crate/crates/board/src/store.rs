//! Persistence of leaderboards, scenarios and raw experiment results.
//!
//! [`BoardStore`] is the storage interface; [`JsonFileStore`] keeps one JSON
//! document per object:
//!
//! ```text
//! boards/<id>.json
//! scenarios/<name>.json
//! results/<experiment_id>.json
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use servo_plugin::ExperimentResult;

use crate::board::{Leaderboard, Scenario};
use crate::error::{io_err, BoardError};

pub trait BoardStore: Send + Sync {
    fn save_board(&self, board: &Leaderboard) -> Result<(), BoardError>;
    /// Fails with [`BoardError::UnknownBoard`] when there is no such board.
    fn load_board(&self, id: &str) -> Result<Leaderboard, BoardError>;
    fn board_ids(&self) -> Result<Vec<String>, BoardError>;

    fn save_scenario(&self, scenario: &Scenario) -> Result<(), BoardError>;
    fn load_scenario(&self, name: &str) -> Result<Scenario, BoardError>;
    fn scenario_names(&self) -> Result<Vec<String>, BoardError>;

    fn save_result(&self, result: &ExperimentResult) -> Result<(), BoardError>;
    /// `None` when there is no such result.
    fn load_result(&self, experiment_id: &str) -> Result<Option<ExperimentResult>, BoardError>;
    fn result_ids(&self) -> Result<Vec<String>, BoardError>;
}

/// Writes via a temporary file and a rename so readers never see a torn
/// document.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub struct JsonFileStore {
    root: PathBuf,
}

impl JsonFileStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, collection: &str, id: &str) -> PathBuf {
        self.root.join(collection).join(format!("{id}.json"))
    }

    fn put<T: Serialize>(&self, collection: &str, id: &str, value: &T) -> Result<(), BoardError> {
        let path = self.path(collection, id);
        let bytes = serde_json::to_vec_pretty(value).expect("stored documents serialize");
        write_atomic(&path, &bytes).map_err(io_err(&path))
    }

    fn get<T: DeserializeOwned>(&self, collection: &str, id: &str) -> Result<Option<T>, BoardError> {
        let path = self.path(collection, id);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| BoardError::Io {
                path,
                source: io::Error::new(io::ErrorKind::InvalidData, e),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn ids(&self, collection: &str) -> Result<Vec<String>, BoardError> {
        let dir = self.root.join(collection);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().into_string().ok())
            .filter_map(|n| n.strip_suffix(".json").map(str::to_string))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

impl BoardStore for JsonFileStore {
    fn save_board(&self, board: &Leaderboard) -> Result<(), BoardError> {
        self.put("boards", &board.id, board)
    }

    fn load_board(&self, id: &str) -> Result<Leaderboard, BoardError> {
        self.get("boards", id)?.ok_or_else(|| BoardError::UnknownBoard(id.into()))
    }

    fn board_ids(&self) -> Result<Vec<String>, BoardError> {
        self.ids("boards")
    }

    fn save_scenario(&self, scenario: &Scenario) -> Result<(), BoardError> {
        self.put("scenarios", &scenario.name, scenario)
    }

    fn load_scenario(&self, name: &str) -> Result<Scenario, BoardError> {
        self.get("scenarios", name)?
            .ok_or_else(|| BoardError::UnknownScenario(name.into()))
    }

    fn scenario_names(&self) -> Result<Vec<String>, BoardError> {
        self.ids("scenarios")
    }

    fn save_result(&self, result: &ExperimentResult) -> Result<(), BoardError> {
        self.put("results", &result.experiment_id, result)
    }

    fn load_result(&self, experiment_id: &str) -> Result<Option<ExperimentResult>, BoardError> {
        self.get("results", experiment_id)
    }

    fn result_ids(&self) -> Result<Vec<String>, BoardError> {
        self.ids("results")
    }
}
