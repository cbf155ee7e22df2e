//! Result payloads returned by algorithm plugins, one shape per task family.
//!
//! * Detection kinds (`PointPRF1`, `RangePRF1`, `EventPRF1`):
//!   `{"window": {"start", "end", "step"}, "predictions": [0|1, ...]}` with one
//!   prediction per step bucket of the window.
//! * RCA kinds (`AccuracyAtK`, `AvgAtK`, `MAR`):
//!   `{"cases": [{"case_id", "candidates": [cmdb_id, ...]}]}`, rank 1 first.
//! * `TopAtK`: `{"top@k": [{"case_id", "labels": [...]}], "epoch": {"1": x, ...}}`.
//! * F1 kinds (`MicroF1`, `MacroF1`, `WeightedF1`):
//!   `{"cases": [{"case_id", "labels": [...]}]}` (or `"label": "..."`).
//!
//! Validation errors carry the JSON path of the offending key.

use std::collections::BTreeSet;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::metrics::{MetricKind, TaskType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("payload schema error at `{path}`: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PayloadWindow {
    pub start: i64,
    pub end: i64,
    pub step: u64,
}

impl PayloadWindow {
    pub fn ticks(&self) -> usize {
        ((self.end - self.start) as u64).div_ceil(self.step) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRanking {
    pub case_id: String,
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedPayload {
    Detection {
        window: PayloadWindow,
        predictions: Vec<bool>,
    },
    Rca {
        cases: Vec<CaseRanking>,
    },
    TopK {
        cases: Vec<CaseRanking>,
        /// `(epoch index, value)` in ascending epoch order.
        epochs: Vec<(u64, f64)>,
    },
    Classification {
        cases: Vec<CaseRanking>,
    },
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, SchemaError> {
    v.as_object().ok_or_else(|| err(path, "expected an object"))
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, SchemaError> {
    obj.get(key).ok_or_else(|| err(join(path, key), "missing required key"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn int(v: &Value, path: &str) -> Result<i64, SchemaError> {
    v.as_i64().ok_or_else(|| err(path, "expected an integer"))
}

fn string_list(v: &Value, path: &str, allow_empty: bool) -> Result<Vec<String>, SchemaError> {
    let arr = v.as_array().ok_or_else(|| err(path, "expected an array of strings"))?;
    if arr.is_empty() && !allow_empty {
        return Err(err(path, "list is empty"));
    }
    let mut seen = BTreeSet::new();
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            let p = format!("{path}[{i}]");
            let s = x.as_str().ok_or_else(|| err(&p, "expected a string"))?;
            if !seen.insert(s) {
                return Err(err(&p, format!("duplicate entry `{s}` (ties are not allowed)")));
            }
            Ok(s.to_string())
        })
        .collect()
}

fn case_list(
    root: &Map<String, Value>,
    key: &str,
    items_key: &str,
    single_key: Option<&str>,
) -> Result<Vec<CaseRanking>, SchemaError> {
    let arr = required(root, key, "")?
        .as_array()
        .ok_or_else(|| err(key, "expected an array"))?;
    let mut ids = BTreeSet::new();
    arr.iter()
        .enumerate()
        .map(|(i, c)| {
            let path = format!("{key}[{i}]");
            let obj = object(c, &path)?;
            let case_id = required(obj, "case_id", &path)?
                .as_str()
                .ok_or_else(|| err(join(&path, "case_id"), "expected a string"))?
                .to_string();
            if !ids.insert(case_id.clone()) {
                return Err(err(join(&path, "case_id"), format!("duplicate case `{case_id}`")));
            }
            let items = match (obj.get(items_key), single_key.and_then(|k| obj.get(k).map(|v| (k, v)))) {
                (Some(v), _) => string_list(v, &join(&path, items_key), true)?,
                (None, Some((k, v))) => vec![v
                    .as_str()
                    .ok_or_else(|| err(join(&path, k), "expected a string"))?
                    .to_string()],
                (None, None) => return Err(err(join(&path, items_key), "missing required key")),
            };
            Ok(CaseRanking { case_id, items })
        })
        .collect()
}

/// Validates `payload` against the schema of `kind`.
pub fn parse_result_payload(payload: &Value, kind: MetricKind) -> Result<ParsedPayload, SchemaError> {
    let root = object(payload, "$")?;
    match kind.task_type() {
        TaskType::AD => {
            let w = object(required(root, "window", "")?, "window")?;
            let window = PayloadWindow {
                start: int(required(w, "start", "window")?, "window.start")?,
                end: int(required(w, "end", "window")?, "window.end")?,
                step: required(w, "step", "window")?
                    .as_u64()
                    .filter(|s| *s > 0)
                    .ok_or_else(|| err("window.step", "expected a positive integer"))?,
            };
            if window.start >= window.end {
                return Err(err("window", "start must be before end"));
            }
            let arr = required(root, "predictions", "")?
                .as_array()
                .ok_or_else(|| err("predictions", "expected an array"))?;
            let predictions = arr
                .iter()
                .enumerate()
                .map(|(i, x)| match x.as_u64() {
                    Some(0) => Ok(false),
                    Some(1) => Ok(true),
                    _ => match x.as_bool() {
                        Some(b) => Ok(b),
                        None => Err(err(format!("predictions[{i}]"), "expected 0 or 1")),
                    },
                })
                .collect::<Result<Vec<_>, _>>()?;
            if predictions.len() != window.ticks() {
                return Err(err(
                    "predictions",
                    format!("expected {} predictions for the window, found {}", window.ticks(), predictions.len()),
                ));
            }
            Ok(ParsedPayload::Detection { window, predictions })
        }
        TaskType::RCA => Ok(ParsedPayload::Rca {
            cases: case_list(root, "cases", "candidates", None)?,
        }),
        TaskType::FC if kind == MetricKind::TopAtK => {
            let cases = case_list(root, "top@k", "labels", None)?;
            let epoch = object(required(root, "epoch", "")?, "epoch")?;
            let mut epochs = epoch
                .iter()
                .map(|(k, v)| {
                    let path = format!("epoch.{k}");
                    let idx = k
                        .parse::<u64>()
                        .ok()
                        .filter(|i| *i >= 1)
                        .ok_or_else(|| err(&path, "epoch keys must be positive integers"))?;
                    let val = v.as_f64().ok_or_else(|| err(&path, "expected a number"))?;
                    Ok((idx, val))
                })
                .collect::<Result<Vec<_>, SchemaError>>()?;
            epochs.sort_by_key(|(i, _)| *i);
            Ok(ParsedPayload::TopK { cases, epochs })
        }
        TaskType::FC => Ok(ParsedPayload::Classification {
            cases: case_list(root, "cases", "labels", Some("label"))?,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn top_k_epochs_in_order() {
        let p = json!({
            "top@k": [{"case_id": "c1", "labels": ["CpuStress", "PodFailure"]}],
            "epoch": {"2": 0.5, "1": 0.25, "3": 0.75, "10": 1.0}
        });
        match parse_result_payload(&p, MetricKind::TopAtK).unwrap() {
            ParsedPayload::TopK { epochs, cases } => {
                assert_eq!(epochs.iter().map(|e| e.0).collect::<Vec<_>>(), [1, 2, 3, 10]);
                assert_eq!(cases[0].items.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_epoch() {
        let p = json!({"top@k": []});
        assert_eq!(parse_result_payload(&p, MetricKind::TopAtK).unwrap_err().path, "epoch");
    }

    #[test]
    fn detection_length_mismatch() {
        let p = json!({"window": {"start": 0, "end": 60, "step": 15}, "predictions": [0, 1, 0]});
        assert_eq!(parse_result_payload(&p, MetricKind::PointPRF1).unwrap_err().path, "predictions");
        let ok = json!({"window": {"start": 0, "end": 60, "step": 15}, "predictions": [0, 1, 0, true]});
        assert!(parse_result_payload(&ok, MetricKind::RangePRF1).is_ok());
    }

    #[test]
    fn nested_paths() {
        let p = json!({"cases": [{"case_id": "a", "candidates": ["x"]}, {"case_id": "b"}]});
        assert_eq!(
            parse_result_payload(&p, MetricKind::MAR).unwrap_err().path,
            "cases[1].candidates"
        );
        let dup = json!({"cases": [{"case_id": "a", "candidates": ["x", "x"]}]});
        assert_eq!(
            parse_result_payload(&dup, MetricKind::AccuracyAtK).unwrap_err().path,
            "cases[0].candidates[1]"
        );
        let bad = json!({"window": {"start": 0, "end": 2, "step": 1}, "predictions": [0, 2]});
        assert_eq!(parse_result_payload(&bad, MetricKind::EventPRF1).unwrap_err().path, "predictions[1]");
    }

    #[test]
    fn single_label_form() {
        let p = json!({"cases": [{"case_id": "a", "label": "CpuStress"}]});
        match parse_result_payload(&p, MetricKind::MacroF1).unwrap() {
            ParsedPayload::Classification { cases } => assert_eq!(cases[0].items, ["CpuStress"]),
            other => panic!("{other:?}"),
        }
    }
}
