//! Scenarios, leaderboards and their text rendering.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use servo_core::faults::PlanEntry;
use servo_core::metrics::round_half_up;
use servo_core::scoring::ScoreOptions;
use servo_core::{DatasetWindow, MetricKind, MetricValue, TaskType};
use sha2::{Digest, Sha256};

/// An operation scenario: the faults of one dataset window, evaluated for
/// one task type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub task_type: TaskType,
    /// Dataset the windows are cut from.
    pub dataset: String,
    /// Evaluation window.
    pub window: DatasetWindow,
    /// Training window for online plugins; disjoint from `window`.
    #[serde(default)]
    pub train_window: Option<DatasetWindow>,
    /// Faults of the dataset that overlap `window`.
    #[serde(default)]
    pub fault_plan: Vec<PlanEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    /// Plugin instance id; unique per board.
    pub algorithm: String,
    /// Name from the plugin manifest.
    pub plugin_name: String,
    #[serde(default)]
    pub metrics: BTreeMap<MetricKind, MetricValue>,
    /// Experiment whose payload was scored (or that failed).
    pub experiment_id: String,
    /// Unix seconds.
    pub computed_at: i64,
    pub status: RowStatus,
    #[serde(default)]
    pub failure_reason: Option<String>,
    /// SHA-256 of the raw result payload.
    #[serde(default)]
    pub payload_hash: Option<String>,
    /// Plugin wall time of the scored phase, in seconds.
    #[serde(default)]
    pub wall_time: f64,
}

impl LeaderboardRow {
    /// Sort value of the row for `primary`, if it has one.
    pub fn headline(&self, primary: MetricKind) -> Option<f64> {
        if self.status != RowStatus::Ok {
            return None;
        }
        self.metrics.get(&primary).map(|v| v.headline(primary))
    }
}

/// SHA-256 hex digest of a JSON document.
pub fn payload_hash(payload: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(payload).expect("JSON serializes")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub id: String,
    pub scenario: Scenario,
    pub metrics: Vec<MetricKind>,
    /// Rows are ordered by this metric's headline value.
    pub primary_metric: MetricKind,
    pub options: ScoreOptions,
    pub rows: Vec<LeaderboardRow>,
    /// Increases on every mutation; a new board has version 1.
    pub version: u64,
    /// Content hash of the evaluation window's data.
    pub dataset_hash: String,
    /// Content hash of the training window's data, if there is one.
    #[serde(default)]
    pub train_dataset_hash: Option<String>,
    pub created_at: i64,
    pub updated_at: i64,
}

/// Orders rows best first by the headline value of `primary` (ascending for
/// metrics where lower is better). Rows without a value, failed rows
/// included, come last. Ties break on the algorithm id, so the result only
/// depends on the set of rows.
pub fn sort_rows(rows: &mut [LeaderboardRow], primary: MetricKind) {
    let better = |a: f64, b: f64| {
        if primary.lower_is_better() {
            a.total_cmp(&b)
        } else {
            b.total_cmp(&a)
        }
    };
    rows.sort_by(|a, b| {
        let by_value = match (a.headline(primary), b.headline(primary)) {
            (Some(x), Some(y)) => better(x, y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_value.then_with(|| a.algorithm.cmp(&b.algorithm))
    });
}

impl Leaderboard {
    pub fn sort(&mut self) {
        sort_rows(&mut self.rows, self.primary_metric);
    }

    pub fn row(&self, algorithm: &str) -> Option<&LeaderboardRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }

    /// Column labels of `kind`, taken from the first row that has a value.
    fn columns_of(&self, kind: MetricKind) -> Vec<String> {
        let labels = self
            .rows
            .iter()
            .find_map(|r| r.metrics.get(&kind))
            .map(|v| v.columns(kind).into_iter().map(|(l, _)| l).collect())
            .unwrap_or_else(|| vec![kind.as_str().to_string()]);
        if self.metrics.len() > 1 {
            labels.into_iter().map(|l| format!("{kind}:{l}")).collect()
        } else {
            labels
        }
    }

    /// Aligned text table with values rounded half-up to two decimals.
    pub fn render_table(&self) -> String {
        let mut header = vec!["#".to_string(), "algorithm".to_string(), "status".to_string()];
        let per_kind: Vec<Vec<String>> = self.metrics.iter().map(|k| self.columns_of(*k)).collect();
        header.extend(per_kind.iter().flatten().cloned());
        header.push("note".into());

        let mut lines = vec![header];
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells = vec![(i + 1).to_string(), row.algorithm.clone(), format!("{:?}", row.status).to_lowercase()];
            for (kind, cols) in self.metrics.iter().zip(&per_kind) {
                let values = row.metrics.get(kind).map(|v| v.columns(*kind)).unwrap_or_default();
                for j in 0..cols.len() {
                    cells.push(match values.get(j) {
                        Some((_, v)) => format!("{:.2}", round_half_up(*v, 2)),
                        None => "-".into(),
                    });
                }
            }
            cells.push(row.failure_reason.clone().unwrap_or_default());
            lines.push(cells);
        }

        let width = lines[0].len();
        let widths: Vec<usize> = (0..width)
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!(
            "leaderboard {} (scenario {}, {}, version {})\n",
            self.id, self.scenario.name, self.scenario.task_type, self.version
        );
        for line in &lines {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| {
                    // Text columns left-aligned, numbers right-aligned.
                    if c == 1 || c == 2 || c == width - 1 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use servo_core::Prf1;

    fn row(algorithm: &str, f1: Option<f64>) -> LeaderboardRow {
        let mut metrics = BTreeMap::new();
        if let Some(f1) = f1 {
            metrics.insert(
                MetricKind::PointPRF1,
                MetricValue::Prf1(Prf1 {
                    precision: f1,
                    recall: f1,
                    f1,
                    zero_division: false,
                }),
            );
        }
        LeaderboardRow {
            algorithm: algorithm.into(),
            plugin_name: "p".into(),
            metrics,
            experiment_id: format!("{algorithm}.test"),
            computed_at: 0,
            status: if f1.is_some() { RowStatus::Ok } else { RowStatus::Failed },
            failure_reason: f1.is_none().then(|| "crashed".to_string()),
            payload_hash: None,
            wall_time: 0.0,
        }
    }

    #[test]
    fn failed_rows_sort_last() {
        let mut rows = vec![row("a", None), row("b", Some(0.5)), row("c", Some(0.9))];
        sort_rows(&mut rows, MetricKind::PointPRF1);
        let order: Vec<_> = rows.iter().map(|r| r.algorithm.as_str()).collect();
        assert_eq!(order, ["c", "b", "a"]);
    }

    #[test]
    fn lower_is_better_sorts_ascending() {
        let scalar = |a: &str, v: f64| {
            let mut r = row(a, None);
            r.status = RowStatus::Ok;
            r.failure_reason = None;
            r.metrics.insert(MetricKind::MAR, MetricValue::Scalar { value: v });
            r
        };
        let mut rows = vec![scalar("x", 3.0), scalar("y", 1.5)];
        sort_rows(&mut rows, MetricKind::MAR);
        assert_eq!(rows[0].algorithm, "y");
    }
}
