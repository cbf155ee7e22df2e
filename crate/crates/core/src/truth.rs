//! Ground-truth labels derived from a fault calendar.

use serde::{Deserialize, Serialize};

use crate::faults::{FaultCalendar, FaultType};
use crate::topology::ServiceTopology;
use crate::workload::SimClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(Label::Normal),
            "anomalous" => Some(Label::Anomalous),
            _ => None,
        }
    }

    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPoint {
    pub timestamp: i64,
    pub label: Label,
}

/// One injected fault, as the evaluator sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub fault_type: FaultType,
    /// The fault target: a pod cmdb_id, or a service name for service-wide faults.
    pub root_cause: String,
    pub service: String,
    pub start: i64,
    pub end: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<LabelPoint>,
    pub cases: Vec<CaseRecord>,
}

impl GroundTruth {
    pub fn anomalous_timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.labels
            .iter()
            .filter(|l| l.label.is_anomalous())
            .map(|l| l.timestamp)
    }

    pub fn case(&self, case_id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}

/// Labels every clock tick and records one case per calendar entry.
///
/// Entries whose target no longer resolves keep their target as service name;
/// callers are expected to validate the calendar first.
pub fn ground_truth(calendar: &FaultCalendar, clock: &SimClock, topology: &ServiceTopology) -> GroundTruth {
    let labels = clock
        .timestamps()
        .map(|t| LabelPoint {
            timestamp: t,
            label: if calendar.active_faults(t).is_empty() {
                Label::Normal
            } else {
                Label::Anomalous
            },
        })
        .collect();
    let cases = calendar
        .entries()
        .iter()
        .filter_map(|e| {
            let f = &e.fault;
            let service = topology
                .resolve_target(&f.target)
                .and_then(|pods| pods.first().map(|p| p.service.clone()))
                .unwrap_or_else(|| f.target.clone());
            Some(CaseRecord {
                case_id: f.id.clone(),
                fault_type: f.primary_type()?,
                root_cause: f.target.clone(),
                service,
                start: f.start_time,
                end: f.end_time(),
            })
        })
        .collect();
    GroundTruth { labels, cases }
}
