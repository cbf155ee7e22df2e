//! CSV export and import of telemetry batches.
//!
//! Directory layout:
//!
//! ```text
//! dataset.json                  window, KPI layout
//! metrics/container/<kpi>.csv   timestamp,cmdb_id,kpi_name,value
//! metrics/service/<kpi>.csv     timestamp,cmdb_id,kpi_name,value
//! logs.csv                      log_id,timestamp,date,cmdb_id,message
//! traces.csv                    timestamp,cmdb_id,parent_span,span_id,trace_id,duration,type,status_code,operation_name
//! ground_truth.csv              case_id,fault_type,root_cause,service,start,end
//! labels.csv                    timestamp,label
//! ```
//!
//! Files are UTF-8 with LF line endings; fields are quoted only when they
//! contain a separator, quote or newline. Values use Rust's shortest
//! round-trip float formatting, which is locale independent.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::faults::FaultType;
use crate::kpi::KpiLayout;
use crate::telemetry::{DatasetWindow, LogRecord, MetricRecord, SpanRecord, TelemetryBatch};
use crate::truth::{CaseRecord, GroundTruth, Label, LabelPoint};

pub const METRIC_HEADER: [&str; 4] = ["timestamp", "cmdb_id", "kpi_name", "value"];
pub const LOG_HEADER: [&str; 5] = ["log_id", "timestamp", "date", "cmdb_id", "message"];
pub const TRACE_HEADER: [&str; 9] = [
    "timestamp",
    "cmdb_id",
    "parent_span",
    "span_id",
    "trace_id",
    "duration",
    "type",
    "status_code",
    "operation_name",
];
pub const GROUND_TRUTH_HEADER: [&str; 6] = ["case_id", "fault_type", "root_cause", "service", "start", "end"];
pub const LABEL_HEADER: [&str; 2] = ["timestamp", "label"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}: header {found:?} does not match expected {expected:?}")]
    SchemaMismatch {
        file: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{file}:{line}: {reason}")]
    RowError { file: PathBuf, line: u64, reason: String },
    #[error("{file}: {reason}")]
    Manifest { file: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CsvError + '_ {
    move |source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    window: DatasetWindow,
    kpis: KpiLayout,
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, CsvError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn write_err(path: &Path) -> impl FnOnce(csv::Error) -> CsvError + '_ {
    move |e| CsvError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    }
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CsvError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(write_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(write_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `batch` under `dir` (created if missing). Rows are written in
/// canonical order whatever the batch's in-memory order.
pub fn export_csv(batch: &TelemetryBatch, dir: &Path) -> Result<(), CsvError> {
    let mut batch = batch.clone();
    batch.canonicalize();
    let container_dir = dir.join("metrics").join("container");
    let service_dir = dir.join("metrics").join("service");
    for d in [&container_dir, &service_dir] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }

    let manifest = DatasetManifest {
        window: batch.window.clone(),
        kpis: batch.kpis.clone(),
    };
    let manifest_path = dir.join("dataset.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;

    let levels = [(&container_dir, &batch.kpis.container), (&service_dir, &batch.kpis.service)];
    for (level_dir, names) in levels {
        for kpi in names.iter() {
            let path = level_dir.join(format!("{kpi}.csv"));
            let rows = batch.metrics.iter().filter(|m| &m.kpi_name == kpi).map(|m| {
                vec![
                    m.timestamp.to_string(),
                    m.cmdb_id.clone(),
                    m.kpi_name.clone(),
                    m.value.to_string(),
                ]
            });
            write_rows(&path, &METRIC_HEADER, rows)?;
        }
    }

    let logs = batch.logs.iter().map(|l| {
        vec![
            l.log_id.clone(),
            l.timestamp.to_string(),
            l.date.clone(),
            l.cmdb_id.clone(),
            l.message.clone(),
        ]
    });
    write_rows(&dir.join("logs.csv"), &LOG_HEADER, logs)?;

    let spans = batch.spans.iter().map(|s| {
        vec![
            s.timestamp.to_string(),
            s.cmdb_id.clone(),
            s.parent_span.clone(),
            s.span_id.clone(),
            s.trace_id.clone(),
            s.duration.to_string(),
            s.span_type.clone(),
            s.status_code.to_string(),
            s.operation_name.clone(),
        ]
    });
    write_rows(&dir.join("traces.csv"), &TRACE_HEADER, spans)?;

    let cases = batch.ground_truth.cases.iter().map(|c| {
        vec![
            c.case_id.clone(),
            c.fault_type.to_string(),
            c.root_cause.clone(),
            c.service.clone(),
            c.start.to_string(),
            c.end.to_string(),
        ]
    });
    write_rows(&dir.join("ground_truth.csv"), &GROUND_TRUTH_HEADER, cases)?;

    let labels = batch
        .ground_truth
        .labels
        .iter()
        .map(|l| vec![l.timestamp.to_string(), l.label.as_str().to_string()]);
    write_rows(&dir.join("labels.csv"), &LABEL_HEADER, labels)
}

/// Reads a CSV file, checking the header and handing each row (with its
/// 1-based line number) to `parse`.
fn read_rows<T>(
    path: &Path,
    header: &[&str],
    mut parse: impl FnMut(&csv::StringRecord) -> Result<T, String>,
) -> Result<Vec<T>, CsvError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| CsvError::RowError {
            file: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if found != header {
        return Err(CsvError::SchemaMismatch {
            file: path.to_path_buf(),
            expected: header.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CsvError::RowError {
            file: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(CsvError::RowError {
                file: path.to_path_buf(),
                line,
                reason: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push(parse(&rec).map_err(|reason| CsvError::RowError {
            file: path.to_path_buf(),
            line,
            reason,
        })?);
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T, String> {
    let raw = &rec[idx];
    raw.parse()
        .map_err(|_| format!("field `{name}`: cannot parse `{raw}`"))
}

/// Reads a directory written by [`export_csv`].
pub fn import_csv(dir: &Path) -> Result<TelemetryBatch, CsvError> {
    let manifest_path = dir.join("dataset.json");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| CsvError::Manifest {
        file: manifest_path.clone(),
        reason: e.to_string(),
    })?;

    let mut metrics = Vec::new();
    let levels = [("container", &manifest.kpis.container), ("service", &manifest.kpis.service)];
    for (level, names) in levels {
        for kpi in names.iter() {
            let path = dir.join("metrics").join(level).join(format!("{kpi}.csv"));
            metrics.extend(read_rows(&path, &METRIC_HEADER, |r| {
                let kpi_name = r[2].to_string();
                if &kpi_name != kpi {
                    return Err(format!("kpi_name `{kpi_name}` in the file for `{kpi}`"));
                }
                Ok(MetricRecord {
                    timestamp: field(r, 0, "timestamp")?,
                    cmdb_id: r[1].to_string(),
                    kpi_name,
                    value: field(r, 3, "value")?,
                })
            })?);
        }
    }

    let logs = read_rows(&dir.join("logs.csv"), &LOG_HEADER, |r| {
        Ok(LogRecord {
            log_id: r[0].to_string(),
            timestamp: field(r, 1, "timestamp")?,
            date: r[2].to_string(),
            cmdb_id: r[3].to_string(),
            message: r[4].to_string(),
        })
    })?;

    let spans = read_rows(&dir.join("traces.csv"), &TRACE_HEADER, |r| {
        Ok(SpanRecord {
            timestamp: field(r, 0, "timestamp")?,
            cmdb_id: r[1].to_string(),
            parent_span: r[2].to_string(),
            span_id: r[3].to_string(),
            trace_id: r[4].to_string(),
            duration: field(r, 5, "duration")?,
            span_type: r[6].to_string(),
            status_code: field(r, 7, "status_code")?,
            operation_name: r[8].to_string(),
        })
    })?;

    let cases = read_rows(&dir.join("ground_truth.csv"), &GROUND_TRUTH_HEADER, |r| {
        Ok(CaseRecord {
            case_id: r[0].to_string(),
            fault_type: r[1].parse::<FaultType>().map_err(|e| e.to_string())?,
            root_cause: r[2].to_string(),
            service: r[3].to_string(),
            start: field(r, 4, "start")?,
            end: field(r, 5, "end")?,
        })
    })?;

    let labels = read_rows(&dir.join("labels.csv"), &LABEL_HEADER, |r| {
        Ok(LabelPoint {
            timestamp: field(r, 0, "timestamp")?,
            label: Label::parse(&r[1]).ok_or_else(|| format!("field `label`: unknown label `{}`", &r[1]))?,
        })
    })?;

    let mut batch = TelemetryBatch {
        window: manifest.window,
        kpis: manifest.kpis,
        metrics,
        logs,
        spans,
        ground_truth: GroundTruth { labels, cases },
    };
    batch.canonicalize();
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::format_date;

    fn tiny() -> TelemetryBatch {
        TelemetryBatch {
            window: DatasetWindow::new(100, 102, 1).unwrap(),
            kpis: KpiLayout {
                container: vec!["cpu".into()],
                service: vec!["p99".into()],
            },
            metrics: vec![
                MetricRecord { timestamp: 100, cmdb_id: "a-0".into(), kpi_name: "cpu".into(), value: 0.1 + 0.2 },
                MetricRecord { timestamp: 101, cmdb_id: "a".into(), kpi_name: "p99".into(), value: 1e-300 },
            ],
            logs: vec![LogRecord {
                log_id: "log-00000000".into(),
                timestamp: 100,
                date: format_date(100),
                cmdb_id: "a-0".into(),
                message: "slow upstream response from b, waited 3 ms \"x\"".into(),
            }],
            spans: vec![SpanRecord {
                timestamp: 101,
                cmdb_id: "a-0".into(),
                parent_span: String::new(),
                span_id: "00ff".into(),
                trace_id: "abcd".into(),
                duration: 1234,
                span_type: "http".into(),
                status_code: 200,
                operation_name: "home".into(),
            }],
            ground_truth: GroundTruth::default(),
        }
    }

    #[test]
    fn round_trip_with_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let b = tiny();
        export_csv(&b, dir.path()).unwrap();
        let logs = fs::read_to_string(dir.path().join("logs.csv")).unwrap();
        assert!(logs.contains("\"slow upstream response from b, waited 3 ms \"\"x\"\"\""));
        assert!(!logs.contains('\r'));
        assert_eq!(import_csv(dir.path()).unwrap(), b);
    }

    #[test]
    fn extra_column_is_schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        export_csv(&tiny(), dir.path()).unwrap();
        let p = dir.path().join("metrics/container/cpu.csv");
        fs::write(&p, "timestamp,cmdb_id,kpi_name,value,extra\n").unwrap();
        assert!(matches!(import_csv(dir.path()), Err(CsvError::SchemaMismatch { .. })));
    }

    #[test]
    fn bad_value_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        export_csv(&tiny(), dir.path()).unwrap();
        let p = dir.path().join("metrics/container/cpu.csv");
        let mut text = String::from("timestamp,cmdb_id,kpi_name,value\n");
        for i in 0..40 {
            text.push_str(&format!("{},a-0,cpu,1.5\n", 100 + i % 2));
        }
        text.push_str("100,a-0,cpu,abc\n");
        fs::write(&p, text).unwrap();
        match import_csv(dir.path()) {
            Err(CsvError::RowError { line, file, .. }) => {
                assert_eq!(line, 42);
                assert!(file.ends_with("cpu.csv"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
