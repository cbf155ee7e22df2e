//! Evaluation metrics for anomaly detection (AD), root cause localization
//! (RCA) and failure classification (FC).
//!
//! Detection scoring comes in three granularities:
//!
//! * **point** — every timestamp is a sample;
//! * **range** — ground-truth segments (maximal anomalous runs) are the unit:
//!   a segment is a true positive if any predicted positive falls inside it,
//!   a predicted segment overlapping no truth segment is a false positive;
//! * **event** — each truth segment's onset is an event, detected if a
//!   predicted positive lies in `[onset, onset + tolerance]`. Predicted
//!   positives are matched to at most one event (maximum matching), and a
//!   predicted segment with no positive inside any event window is a false
//!   positive.
//!
//! All functions are pure; scores are raw `f64` values, and rounding for
//! display is left to [`round_half_up`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default event-scoring tolerance, in ticks.
pub const DEFAULT_EVENT_TOLERANCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    AD,
    RCA,
    FC,
}

impl TaskType {
    pub const ALL: [TaskType; 3] = [TaskType::AD, TaskType::RCA, TaskType::FC];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::AD => "AD",
            TaskType::RCA => "RCA",
            TaskType::FC => "FC",
        }
    }

    pub fn metric_kinds(self) -> &'static [MetricKind] {
        use MetricKind::*;
        match self {
            TaskType::AD => &[PointPRF1, RangePRF1, EventPRF1],
            TaskType::RCA => &[AccuracyAtK, AvgAtK, MAR],
            TaskType::FC => &[TopAtK, MicroF1, MacroF1, WeightedF1],
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task type `{s}` (expected AD, RCA or FC)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    PointPRF1,
    RangePRF1,
    EventPRF1,
    AccuracyAtK,
    AvgAtK,
    MAR,
    TopAtK,
    MicroF1,
    MacroF1,
    WeightedF1,
}

impl MetricKind {
    pub const ALL: [MetricKind; 10] = [
        MetricKind::PointPRF1,
        MetricKind::RangePRF1,
        MetricKind::EventPRF1,
        MetricKind::AccuracyAtK,
        MetricKind::AvgAtK,
        MetricKind::MAR,
        MetricKind::TopAtK,
        MetricKind::MicroF1,
        MetricKind::MacroF1,
        MetricKind::WeightedF1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::PointPRF1 => "PointPRF1",
            MetricKind::RangePRF1 => "RangePRF1",
            MetricKind::EventPRF1 => "EventPRF1",
            MetricKind::AccuracyAtK => "AccuracyAtK",
            MetricKind::AvgAtK => "AvgAtK",
            MetricKind::MAR => "MAR",
            MetricKind::TopAtK => "TopAtK",
            MetricKind::MicroF1 => "MicroF1",
            MetricKind::MacroF1 => "MacroF1",
            MetricKind::WeightedF1 => "WeightedF1",
        }
    }

    pub fn task_type(self) -> TaskType {
        TaskType::ALL
            .into_iter()
            .find(|t| t.metric_kinds().contains(&self))
            .expect("every kind belongs to a task")
    }

    pub fn compatible_with(self, task: TaskType) -> bool {
        self.task_type() == task
    }

    /// Whether smaller values rank better.
    pub fn lower_is_better(self) -> bool {
        self == MetricKind::MAR
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown metric kind `{s}`"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("nothing to score: no positive labels or predictions, or no cases")]
    EmptyInput,
    #[error("labels and predictions differ in length ({labels} vs {predictions})")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("case `{0}` has no ranked prediction list")]
    UnrankedPrediction(String),
    #[error("case `{0}` lists a candidate more than once")]
    DuplicateCandidate(String),
}

/// Precision, recall and F1. `zero_division` is set when any ratio had a zero
/// denominator and was reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default)]
    pub zero_division: bool,
}

impl Prf1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let mut zero_division = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                zero_division = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let (f1, zero) = harmonic(precision, recall);
        Self {
            precision,
            recall,
            f1,
            zero_division: zero_division || zero,
        }
    }
}

/// `2PR / (P + R)`, or 0 (flagged) when `P + R = 0`.
pub fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

/// Aligned per-timestamp labels (truth) and binary predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointPredictions {
    labels: Vec<bool>,
    predictions: Vec<bool>,
}

impl PointPredictions {
    pub fn new(labels: Vec<bool>, predictions: Vec<bool>) -> Result<Self, MetricError> {
        if labels.len() != predictions.len() {
            return Err(MetricError::LengthMismatch {
                labels: labels.len(),
                predictions: predictions.len(),
            });
        }
        Ok(Self { labels, predictions })
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn predictions(&self) -> &[bool] {
        &self.predictions
    }

    fn require_signal(&self) -> Result<(), MetricError> {
        if self.labels.iter().chain(&self.predictions).any(|&b| b) {
            Ok(())
        } else {
            Err(MetricError::EmptyInput)
        }
    }
}

/// Maximal runs of `true` as half-open `(start, end)` index pairs.
pub fn segments(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len()));
    }
    out
}

pub fn point_prf1(p: &PointPredictions) -> Result<Prf1, MetricError> {
    p.require_signal()?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&l, &y) in p.labels.iter().zip(&p.predictions) {
        match (l, y) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Prf1::from_counts(tp, fp, fn_))
}

pub fn range_prf1(p: &PointPredictions) -> Result<Prf1, MetricError> {
    p.require_signal()?;
    let truth = segments(&p.labels);
    let predicted = segments(&p.predictions);
    let tp = truth
        .iter()
        .filter(|&&(s, e)| p.predictions[s..e].iter().any(|&b| b))
        .count();
    let fn_ = truth.len() - tp;
    let fp = predicted
        .iter()
        .filter(|&&(s, e)| p.labels[s..e].iter().all(|&b| !b))
        .count();
    Ok(Prf1::from_counts(tp, fp, fn_))
}

pub fn event_prf1(p: &PointPredictions, tolerance: usize) -> Result<Prf1, MetricError> {
    p.require_signal()?;
    let n = p.labels.len();
    let onsets: Vec<usize> = segments(&p.labels).into_iter().map(|(s, _)| s).collect();
    let window = |onset: usize| onset..=(onset + tolerance).min(n.saturating_sub(1));

    // Windows share one length, so taking the earliest free positive for each
    // event in onset order yields a maximum matching.
    let mut used = vec![false; n];
    let mut tp = 0;
    for &o in &onsets {
        if let Some(i) = window(o).find(|&i| p.predictions[i] && !used[i]) {
            used[i] = true;
            tp += 1;
        }
    }
    let fn_ = onsets.len() - tp;
    let in_some_window = |i: usize| onsets.iter().any(|&o| window(o).contains(&i));
    let fp = segments(&p.predictions)
        .into_iter()
        .filter(|&(s, e)| !(s..e).any(in_some_window))
        .count();
    Ok(Prf1::from_counts(tp, fp, fn_))
}

/// One RCA case: the true root cause and a ranked candidate list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedCase {
    pub case_id: String,
    pub true_root_cause: String,
    pub candidates: Vec<String>,
}

impl RankedCase {
    pub fn new(
        case_id: impl Into<String>,
        true_root_cause: impl Into<String>,
        candidates: Vec<String>,
    ) -> Result<Self, MetricError> {
        let c = Self {
            case_id: case_id.into(),
            true_root_cause: true_root_cause.into(),
            candidates,
        };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<(), MetricError> {
        let distinct: BTreeSet<&String> = self.candidates.iter().collect();
        if distinct.len() != self.candidates.len() {
            return Err(MetricError::DuplicateCandidate(self.case_id.clone()));
        }
        Ok(())
    }

    /// 1-based rank of the true cause, if listed.
    pub fn rank(&self) -> Option<usize> {
        self.candidates
            .iter()
            .position(|c| c == &self.true_root_cause)
            .map(|i| i + 1)
    }
}

fn check_ranked(cases: &[RankedCase], k: usize) -> Result<(), MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if cases.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    cases.iter().try_for_each(RankedCase::check)
}

pub fn accuracy_at_k(cases: &[RankedCase], k: usize) -> Result<f64, MetricError> {
    check_ranked(cases, k)?;
    let hits = cases.iter().filter(|c| c.rank().is_some_and(|r| r <= k)).count();
    Ok(hits as f64 / cases.len() as f64)
}

/// Mean of Accuracy@1..=k.
pub fn avg_at_k(cases: &[RankedCase], k: usize) -> Result<f64, MetricError> {
    check_ranked(cases, k)?;
    let sum: f64 = (1..=k).map(|j| accuracy_at_k(cases, j)).sum::<Result<f64, _>>()?;
    Ok(sum / k as f64)
}

/// Accuracy@1..=max_k.
pub fn accuracy_curve(cases: &[RankedCase], max_k: usize) -> Result<Vec<f64>, MetricError> {
    (1..=max_k.max(1)).map(|k| accuracy_at_k(cases, k)).collect()
}

/// Avg@1..=max_k (running means of the accuracy curve).
pub fn avg_curve(cases: &[RankedCase], max_k: usize) -> Result<Vec<f64>, MetricError> {
    (1..=max_k.max(1)).map(|k| avg_at_k(cases, k)).collect()
}

/// Mean 1-based rank of the true cause. An absent cause counts as
/// `candidates.len() + 1`, or as `penalty` when given.
pub fn mean_average_rank(cases: &[RankedCase], penalty: Option<f64>) -> Result<f64, MetricError> {
    check_ranked(cases, 1)?;
    let total: f64 = cases
        .iter()
        .map(|c| match c.rank() {
            Some(r) => r as f64,
            None => penalty.unwrap_or((c.candidates.len() + 1) as f64),
        })
        .sum();
    Ok(total / cases.len() as f64)
}

/// A classifier's output for one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Single(String),
    Ranked(Vec<String>),
}

impl Prediction {
    pub fn top1(&self) -> Option<&str> {
        match self {
            Prediction::Single(s) => Some(s),
            Prediction::Ranked(v) => v.first().map(String::as_str),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedCase {
    pub case_id: String,
    pub true_label: String,
    pub predicted: Prediction,
}

pub fn top_at_k(cases: &[ClassifiedCase], k: usize) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if cases.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut hits = 0;
    for c in cases {
        let list: Vec<&str> = match &c.predicted {
            Prediction::Single(s) => vec![s.as_str()],
            Prediction::Ranked(v) => v.iter().map(String::as_str).collect(),
        };
        let distinct: BTreeSet<&str> = list.iter().copied().collect();
        if list.is_empty() || distinct.len() != list.len() {
            return Err(MetricError::UnrankedPrediction(c.case_id.clone()));
        }
        if list.iter().take(k).any(|l| *l == c.true_label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / cases.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Micro,
    Macro,
    Weighted,
}

/// Multi-class P/R/F1 over top-1 predictions. Classes are the union of true
/// and predicted labels; a case without any prediction only adds a false
/// negative.
pub fn multiclass_f1(cases: &[ClassifiedCase], averaging: Averaging) -> Result<Prf1, MetricError> {
    if cases.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    #[derive(Default, Clone, Copy)]
    struct Tally {
        tp: usize,
        fp: usize,
        fn_: usize,
        support: usize,
    }
    let mut per_class: BTreeMap<&str, Tally> = BTreeMap::new();
    for c in cases {
        per_class.entry(&c.true_label).or_default().support += 1;
        match c.predicted.top1() {
            Some(p) if p == c.true_label => per_class.entry(p).or_default().tp += 1,
            Some(p) => {
                per_class.entry(p).or_default().fp += 1;
                per_class.entry(&c.true_label).or_default().fn_ += 1;
            }
            None => per_class.entry(&c.true_label).or_default().fn_ += 1,
        }
    }
    match averaging {
        Averaging::Micro => {
            let (tp, fp, fn_) = per_class
                .values()
                .fold((0, 0, 0), |(a, b, c), t| (a + t.tp, b + t.fp, c + t.fn_));
            Ok(Prf1::from_counts(tp, fp, fn_))
        }
        Averaging::Macro | Averaging::Weighted => {
            let total_support: usize = per_class.values().map(|t| t.support).sum();
            let n_classes = per_class.len() as f64;
            let mut out = Prf1 {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                zero_division: false,
            };
            for t in per_class.values() {
                let s = Prf1::from_counts(t.tp, t.fp, t.fn_);
                let w = match averaging {
                    Averaging::Macro => 1.0 / n_classes,
                    _ => t.support as f64 / total_support as f64,
                };
                out.precision += w * s.precision;
                out.recall += w * s.recall;
                out.f1 += w * s.f1;
                out.zero_division |= s.zero_division;
            }
            Ok(out)
        }
    }
}

/// Rounds half away from zero at `decimals` places, nudging by 1e-9 so that
/// values like 0.675 (stored as 0.67499…) round up as printed tables do.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x.abs() * scale + 0.5 + 1e-9;
    x.signum() * scaled.floor() / scale
}

/// A computed score in one of three shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum MetricValue {
    Prf1(Prf1),
    /// Values for k = 1, 2, ...
    AtK { values: Vec<f64> },
    Scalar { value: f64 },
}

impl MetricValue {
    /// The number leaderboards sort on for `kind`.
    pub fn headline(&self, kind: MetricKind) -> f64 {
        match self {
            MetricValue::Prf1(p) => p.f1,
            MetricValue::AtK { values } => match kind {
                MetricKind::AvgAtK => values.last().copied().unwrap_or(0.0),
                _ => values.first().copied().unwrap_or(0.0),
            },
            MetricValue::Scalar { value } => *value,
        }
    }

    /// Short columns for table rendering: `(label, raw value)`.
    pub fn columns(&self, kind: MetricKind) -> Vec<(String, f64)> {
        match self {
            MetricValue::Prf1(p) => vec![
                ("P".into(), p.precision),
                ("R".into(), p.recall),
                ("F1".into(), p.f1),
            ],
            MetricValue::AtK { values } => {
                let prefix = match kind {
                    MetricKind::AvgAtK => "Avg@",
                    MetricKind::TopAtK => "Top@",
                    _ => "Acc@",
                };
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (format!("{prefix}{}", i + 1), *v))
                    .collect()
            }
            MetricValue::Scalar { value } => vec![(kind.as_str().to_string(), *value)],
        }
    }
}
