//! Scores a plugin payload against the ground truth of a dataset slice.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metrics::{
    accuracy_curve, avg_curve, event_prf1, mean_average_rank, multiclass_f1, point_prf1, range_prf1, top_at_k,
    Averaging, ClassifiedCase, MetricError, MetricKind, MetricValue, PointPredictions, Prediction, RankedCase,
    DEFAULT_EVENT_TOLERANCE,
};
use crate::payload::{parse_result_payload, CaseRanking, ParsedPayload, SchemaError};
use crate::telemetry::TelemetryBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Largest k reported for the @k metrics.
    pub max_k: usize,
    /// Event-scoring tolerance in ticks.
    pub tolerance: usize,
    /// Rank charged when the true cause is missing (default: list length + 1).
    pub mar_penalty: Option<f64>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            max_k: 5,
            tolerance: DEFAULT_EVENT_TOLERANCE,
            mar_penalty: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("payload window {found} does not match the experiment window {expected}")]
    WindowMismatch { expected: String, found: String },
    #[error("payload has no entry for case `{0}`")]
    MissingCase(String),
    #[error("payload names case `{0}`, which is not in the dataset window")]
    UnknownCase(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Parses and scores `payload` for `kind` against `truth` (the experiment's
/// dataset slice).
pub fn evaluate(kind: MetricKind, payload: &Value, truth: &TelemetryBatch, opts: &ScoreOptions) -> Result<MetricValue, ScoreError> {
    let parsed = parse_result_payload(payload, kind)?;
    score(kind, &parsed, truth, opts)
}

fn align<'a>(truth: &'a TelemetryBatch, cases: &'a [CaseRanking]) -> Result<Vec<(&'a crate::truth::CaseRecord, &'a CaseRanking)>, ScoreError> {
    for c in cases {
        if truth.ground_truth.case(&c.case_id).is_none() {
            return Err(ScoreError::UnknownCase(c.case_id.clone()));
        }
    }
    truth
        .ground_truth
        .cases
        .iter()
        .map(|t| {
            cases
                .iter()
                .find(|c| c.case_id == t.case_id)
                .map(|c| (t, c))
                .ok_or_else(|| ScoreError::MissingCase(t.case_id.clone()))
        })
        .collect()
}

pub fn score(kind: MetricKind, parsed: &ParsedPayload, truth: &TelemetryBatch, opts: &ScoreOptions) -> Result<MetricValue, ScoreError> {
    let max_k = opts.max_k.max(1);
    match parsed {
        ParsedPayload::Detection { window, predictions } => {
            let w = &truth.window;
            if (window.start, window.end, window.step) != (w.start, w.end, w.step) {
                return Err(ScoreError::WindowMismatch {
                    expected: w.to_string(),
                    found: format!("{}..{}@{}", window.start, window.end, window.step),
                });
            }
            let p = PointPredictions::new(truth.label_vector(), predictions.clone())?;
            let v = match kind {
                MetricKind::RangePRF1 => range_prf1(&p)?,
                MetricKind::EventPRF1 => event_prf1(&p, opts.tolerance)?,
                _ => point_prf1(&p)?,
            };
            Ok(MetricValue::Prf1(v))
        }
        ParsedPayload::Rca { cases } => {
            let ranked = align(truth, cases)?
                .into_iter()
                .map(|(t, c)| RankedCase::new(&t.case_id, &t.root_cause, c.items.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(match kind {
                MetricKind::MAR => MetricValue::Scalar {
                    value: mean_average_rank(&ranked, opts.mar_penalty)?,
                },
                MetricKind::AvgAtK => MetricValue::AtK {
                    values: avg_curve(&ranked, max_k)?,
                },
                _ => MetricValue::AtK {
                    values: accuracy_curve(&ranked, max_k)?,
                },
            })
        }
        ParsedPayload::TopK { cases, .. } | ParsedPayload::Classification { cases } => {
            let classified: Vec<ClassifiedCase> = align(truth, cases)?
                .into_iter()
                .map(|(t, c)| ClassifiedCase {
                    case_id: t.case_id.clone(),
                    true_label: t.fault_type.to_string(),
                    predicted: Prediction::Ranked(c.items.clone()),
                })
                .collect();
            Ok(match kind {
                MetricKind::TopAtK => MetricValue::AtK {
                    values: (1..=max_k)
                        .map(|k| top_at_k(&classified, k))
                        .collect::<Result<_, _>>()?,
                },
                MetricKind::MacroF1 => MetricValue::Prf1(multiclass_f1(&classified, Averaging::Macro)?),
                MetricKind::WeightedF1 => MetricValue::Prf1(multiclass_f1(&classified, Averaging::Weighted)?),
                _ => MetricValue::Prf1(multiclass_f1(&classified, Averaging::Micro)?),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::FaultType;
    use crate::kpi::KpiLayout;
    use crate::telemetry::DatasetWindow;
    use crate::truth::{CaseRecord, GroundTruth, Label, LabelPoint};
    use serde_json::json;

    fn truth() -> TelemetryBatch {
        TelemetryBatch {
            window: DatasetWindow::new(0, 6, 1).unwrap(),
            kpis: KpiLayout::default(),
            metrics: vec![],
            logs: vec![],
            spans: vec![],
            ground_truth: GroundTruth {
                labels: (0..6)
                    .map(|t| LabelPoint {
                        timestamp: t,
                        label: if (2..4).contains(&t) { Label::Anomalous } else { Label::Normal },
                    })
                    .collect(),
                cases: vec![CaseRecord {
                    case_id: "c1".into(),
                    fault_type: FaultType::CpuStress,
                    root_cause: "cartservice-0".into(),
                    service: "cartservice".into(),
                    start: 2,
                    end: 4,
                }],
            },
        }
    }

    #[test]
    fn detection_scoring() {
        let p = json!({"window": {"start": 0, "end": 6, "step": 1}, "predictions": [0, 0, 1, 1, 0, 0]});
        let v = evaluate(MetricKind::PointPRF1, &p, &truth(), &ScoreOptions::default()).unwrap();
        assert_eq!(v.headline(MetricKind::PointPRF1), 1.0);
        let shifted = json!({"window": {"start": 1, "end": 7, "step": 1}, "predictions": [0, 0, 1, 1, 0, 0]});
        assert!(matches!(
            evaluate(MetricKind::PointPRF1, &shifted, &truth(), &ScoreOptions::default()),
            Err(ScoreError::WindowMismatch { .. })
        ));
    }

    #[test]
    fn rca_scoring() {
        let p = json!({"cases": [{"case_id": "c1", "candidates": ["frontend-0", "cartservice-0"]}]});
        let v = evaluate(MetricKind::AccuracyAtK, &p, &truth(), &ScoreOptions::default()).unwrap();
        assert_eq!(v, MetricValue::AtK { values: vec![0.0, 1.0, 1.0, 1.0, 1.0] });
        let mar = evaluate(MetricKind::MAR, &p, &truth(), &ScoreOptions::default()).unwrap();
        assert_eq!(mar, MetricValue::Scalar { value: 2.0 });
        let missing = json!({"cases": []});
        assert!(matches!(
            evaluate(MetricKind::MAR, &missing, &truth(), &ScoreOptions::default()),
            Err(ScoreError::MissingCase(_))
        ));
    }

    #[test]
    fn classification_scoring() {
        let p = json!({"top@k": [{"case_id": "c1", "labels": ["PodFailure", "CpuStress"]}], "epoch": {"1": 0.1}});
        let v = evaluate(MetricKind::TopAtK, &p, &truth(), &ScoreOptions::default()).unwrap();
        assert_eq!(v.headline(MetricKind::TopAtK), 0.0);
        let f = json!({"cases": [{"case_id": "c1", "label": "CpuStress"}]});
        let v = evaluate(MetricKind::WeightedF1, &f, &truth(), &ScoreOptions::default()).unwrap();
        assert_eq!(v.headline(MetricKind::WeightedF1), 1.0);
    }
}
