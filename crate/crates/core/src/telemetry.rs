//! Telemetry record types, batches and dataset windows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kpi::KpiLayout;
use crate::truth::{GroundTruth, LabelPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub timestamp: i64,
    pub cmdb_id: String,
    pub kpi_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub log_id: String,
    pub timestamp: i64,
    /// `YYYY-MM-DD HH:MM:SS`, UTC.
    pub date: String,
    pub cmdb_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub timestamp: i64,
    pub cmdb_id: String,
    /// Empty for the root span of a trace.
    pub parent_span: String,
    pub span_id: String,
    pub trace_id: String,
    /// Microseconds.
    pub duration: u64,
    #[serde(rename = "type")]
    pub span_type: String,
    pub status_code: u16,
    pub operation_name: String,
}

impl SpanRecord {
    pub fn is_root(&self) -> bool {
        self.parent_span.is_empty()
    }
}

/// Renders an epoch timestamp in the log `date` format.
pub fn format_date(timestamp: i64) -> String {
    chrono::DateTime::from_timestamp(timestamp, 0)
        .map(|d| d.format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Metrics,
    Logs,
    Traces,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Metrics, Modality::Logs, Modality::Traces];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Metrics => "metrics",
            Modality::Logs => "logs",
            Modality::Traces => "traces",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown modality `{s}` (expected metrics, logs or traces)"))
    }
}

fn all_modalities() -> BTreeSet<Modality> {
    Modality::ALL.into_iter().collect()
}

/// A half-open time range `[start, end)` sampled every `step` seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetWindow {
    pub start: i64,
    pub end: i64,
    pub step: u64,
    #[serde(default = "all_modalities")]
    pub modalities: BTreeSet<Modality>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WindowError {
    #[error("window start {start} must be before end {end}")]
    Empty { start: i64, end: i64 },
    #[error("window step must be at least 1 second")]
    Step,
    #[error("window [{start}, {end}) is not inside the batch window [{batch_start}, {batch_end})")]
    OutOfRange {
        start: i64,
        end: i64,
        batch_start: i64,
        batch_end: i64,
    },
    #[error("malformed window `{0}`")]
    Malformed(String),
}

impl DatasetWindow {
    pub fn new(start: i64, end: i64, step: u64) -> Result<Self, WindowError> {
        let w = Self {
            start,
            end,
            step,
            modalities: all_modalities(),
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_modalities(mut self, modalities: impl IntoIterator<Item = Modality>) -> Self {
        self.modalities = modalities.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if self.start >= self.end {
            return Err(WindowError::Empty {
                start: self.start,
                end: self.end,
            });
        }
        if self.step == 0 {
            return Err(WindowError::Step);
        }
        Ok(())
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn covers(&self, other: &DatasetWindow) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Number of step buckets in the window (the last may be partial).
    pub fn ticks(&self) -> usize {
        let span = (self.end - self.start) as u64;
        span.div_ceil(self.step) as usize
    }

    /// Bucket index of `t`; `t` must lie in the window.
    pub fn bucket(&self, t: i64) -> usize {
        ((t - self.start) as u64 / self.step) as usize
    }

    pub fn has(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    /// Same range and step, without the modality selection.
    pub fn same_grid(&self, other: &DatasetWindow) -> bool {
        self.start == other.start && self.end == other.end && self.step == other.step
    }

    pub fn disjoint(&self, other: &DatasetWindow) -> bool {
        self.end <= other.start || other.end <= self.start
    }
}

impl FromStr for DatasetWindow {
    type Err = WindowError;

    /// Parses `START..END` or `START..END@STEP` (epoch seconds).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WindowError::Malformed(s.to_string());
        let (range, step) = match s.split_once('@') {
            Some((r, st)) => (r, st.trim().parse().map_err(|_| bad())?),
            None => (s, 1),
        };
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        Self::new(start, end, step)
    }
}

impl fmt::Display for DatasetWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}@{}", self.start, self.end, self.step)
    }
}

/// Metric, log and span rows plus ground truth for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryBatch {
    pub window: DatasetWindow,
    pub kpis: KpiLayout,
    pub metrics: Vec<MetricRecord>,
    pub logs: Vec<LogRecord>,
    pub spans: Vec<SpanRecord>,
    pub ground_truth: GroundTruth,
}

impl TelemetryBatch {
    /// Orders every record list by timestamp, then cmdb_id, then a per-type
    /// tiebreak. Exported files and imported batches use this order.
    pub fn canonicalize(&mut self) {
        self.metrics.sort_by(|a, b| {
            (a.timestamp, &a.cmdb_id, &a.kpi_name).cmp(&(b.timestamp, &b.cmdb_id, &b.kpi_name))
        });
        self.logs
            .sort_by(|a, b| (a.timestamp, &a.cmdb_id, &a.log_id).cmp(&(b.timestamp, &b.cmdb_id, &b.log_id)));
        self.spans.sort_by(|a, b| {
            (a.timestamp, &a.cmdb_id, &a.trace_id, &a.span_id).cmp(&(b.timestamp, &b.cmdb_id, &b.trace_id, &b.span_id))
        });
        self.ground_truth.labels.sort_by_key(|l| l.timestamp);
        self.ground_truth
            .cases
            .sort_by(|a, b| (a.start, &a.case_id).cmp(&(b.start, &b.case_id)));
    }

    /// Every record timestamp lies inside the window.
    pub fn records_in_window(&self) -> bool {
        let w = &self.window;
        self.metrics.iter().all(|r| w.contains(r.timestamp))
            && self.logs.iter().all(|r| w.contains(r.timestamp))
            && self.spans.iter().all(|r| w.contains(r.timestamp))
            && self.ground_truth.labels.iter().all(|l| w.contains(l.timestamp))
    }

    /// SHA-256 over the batch's JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("batch serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Restricts the batch to `window`.
    ///
    /// Metrics and labels are resampled to `window.step` by keeping the last
    /// observation per step bucket of each series (original timestamps are
    /// kept). Logs and spans are filtered but not resampled. Cases that
    /// overlap the window are kept.
    pub fn slice(&self, window: &DatasetWindow) -> Result<TelemetryBatch, WindowError> {
        window.validate()?;
        if !self.window.covers(window) {
            return Err(WindowError::OutOfRange {
                start: window.start,
                end: window.end,
                batch_start: self.window.start,
                batch_end: self.window.end,
            });
        }
        let metrics = if window.has(Modality::Metrics) {
            let mut last: BTreeMap<(&str, &str, usize), &MetricRecord> = BTreeMap::new();
            for r in self.metrics.iter().filter(|r| window.contains(r.timestamp)) {
                let key = (r.cmdb_id.as_str(), r.kpi_name.as_str(), window.bucket(r.timestamp));
                let slot = last.entry(key).or_insert(r);
                if r.timestamp >= slot.timestamp {
                    *slot = r;
                }
            }
            last.into_values().cloned().collect()
        } else {
            Vec::new()
        };
        let logs = if window.has(Modality::Logs) {
            self.logs.iter().filter(|r| window.contains(r.timestamp)).cloned().collect()
        } else {
            Vec::new()
        };
        let spans = if window.has(Modality::Traces) {
            self.spans.iter().filter(|r| window.contains(r.timestamp)).cloned().collect()
        } else {
            Vec::new()
        };
        let mut label_buckets: BTreeMap<usize, LabelPoint> = BTreeMap::new();
        for l in self.ground_truth.labels.iter().filter(|l| window.contains(l.timestamp)) {
            let slot = label_buckets.entry(window.bucket(l.timestamp)).or_insert(*l);
            if l.timestamp >= slot.timestamp {
                *slot = *l;
            }
        }
        let cases = self
            .ground_truth
            .cases
            .iter()
            .filter(|c| c.start < window.end && window.start < c.end)
            .cloned()
            .collect();
        let mut out = TelemetryBatch {
            window: window.clone(),
            kpis: self.kpis.clone(),
            metrics,
            logs,
            spans,
            ground_truth: GroundTruth {
                labels: label_buckets.into_values().collect(),
                cases,
            },
        };
        out.canonicalize();
        Ok(out)
    }

    /// Per-bucket labels over the batch window: a bucket is anomalous when
    /// its retained label is; buckets without a label are normal.
    pub fn label_vector(&self) -> Vec<bool> {
        let mut v = vec![false; self.window.ticks()];
        for l in &self.ground_truth.labels {
            if self.window.contains(l.timestamp) {
                let b = self.window.bucket(l.timestamp);
                v[b] = l.label.is_anomalous();
            }
        }
        v
    }
}

/// Anything that can hand out telemetry for a window.
pub trait TelemetrySource: Send + Sync {
    fn batch_for(&self, window: &DatasetWindow) -> Result<TelemetryBatch, WindowError>;
}

impl TelemetrySource for TelemetryBatch {
    fn batch_for(&self, window: &DatasetWindow) -> Result<TelemetryBatch, WindowError> {
        self.slice(window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truth::{CaseRecord, Label};
    use crate::faults::FaultType;

    fn series_batch() -> TelemetryBatch {
        let window = DatasetWindow::new(0, 60, 1).unwrap();
        let metrics = (0..60)
            .map(|t| MetricRecord {
                timestamp: t,
                cmdb_id: "a-0".into(),
                kpi_name: "cpu".into(),
                value: t as f64,
            })
            .collect();
        let labels = (0..60)
            .map(|t| LabelPoint {
                timestamp: t,
                label: if (20..35).contains(&t) { Label::Anomalous } else { Label::Normal },
            })
            .collect();
        let mut b = TelemetryBatch {
            window,
            kpis: KpiLayout {
                container: vec!["cpu".into()],
                service: vec![],
            },
            metrics,
            logs: vec![LogRecord {
                log_id: "log-00000000".into(),
                timestamp: 5,
                date: format_date(5),
                cmdb_id: "a-0".into(),
                message: "hi".into(),
            }],
            spans: vec![],
            ground_truth: GroundTruth {
                labels,
                cases: vec![CaseRecord {
                    case_id: "c".into(),
                    fault_type: FaultType::CpuStress,
                    root_cause: "a-0".into(),
                    service: "a".into(),
                    start: 20,
                    end: 35,
                }],
            },
        };
        b.canonicalize();
        b
    }

    #[test]
    fn date_format() {
        assert_eq!(format_date(0), "1970-01-01 00:00:00");
        assert_eq!(format_date(1_700_000_000), "2023-11-14 22:13:20");
    }

    #[test]
    fn full_slice_is_identity() {
        let b = series_batch();
        assert_eq!(b.slice(&b.window).unwrap(), b);
    }

    #[test]
    fn metrics_only_slice() {
        let b = series_batch();
        let w = b.window.clone().with_modalities([Modality::Metrics]);
        let s = b.slice(&w).unwrap();
        assert!(s.logs.is_empty() && s.spans.is_empty());
        assert_eq!(s.metrics.len(), 60);
    }

    #[test]
    fn resample_keeps_last_per_bucket() {
        let b = series_batch();
        let s = b.slice(&DatasetWindow::new(0, 60, 15).unwrap()).unwrap();
        let ts: Vec<_> = s.metrics.iter().map(|m| m.timestamp).collect();
        assert_eq!(ts, [14, 29, 44, 59]);
        assert_eq!(s.label_vector(), [false, true, false, false]);
    }

    #[test]
    fn out_of_range() {
        let b = series_batch();
        assert!(matches!(
            b.slice(&DatasetWindow::new(30, 90, 1).unwrap()),
            Err(WindowError::OutOfRange { .. })
        ));
    }

    #[test]
    fn cases_outside_are_dropped() {
        let b = series_batch();
        assert!(b.slice(&DatasetWindow::new(40, 60, 1).unwrap()).unwrap().ground_truth.cases.is_empty());
        assert_eq!(b.slice(&DatasetWindow::new(30, 60, 1).unwrap()).unwrap().ground_truth.cases.len(), 1);
    }

    #[test]
    fn window_parsing() {
        let w: DatasetWindow = "100..200@15".parse().unwrap();
        assert_eq!((w.start, w.end, w.step), (100, 200, 15));
        assert_eq!(w.ticks(), 7);
        assert_eq!(w.to_string().parse::<DatasetWindow>().unwrap(), w);
        assert!("200..100".parse::<DatasetWindow>().is_err());
        assert!("1..5@0".parse::<DatasetWindow>().is_err());
    }
}
