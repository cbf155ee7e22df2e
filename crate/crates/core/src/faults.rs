//! Fault definitions, plan files and the injection calendar.
//!
//! A fault plan is a TOML document with one `[[faults]]` table per fault:
//!
//! ```toml
//! [[faults]]
//! id = "cpu-1"
//! type = "CpuStress"
//! target = "cartservice-0"      # pod cmdb_id or service name
//! start = 1700000600            # epoch seconds; omitted for immediate mode
//! duration = 300
//! mode = "scheduled"            # or "immediate"
//! params = { load_pct = 80 }
//! ```
//!
//! The same entry shape is used for the calendar's JSON export and the REST
//! API. A fault combining several behaviors lists them under `behaviors`
//! instead of `type`/`params`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::topology::ServiceTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultType {
    CpuStress,
    MemoryStress,
    PodFailure,
    NetworkDelay,
    NetworkLoss,
}

/// Names accepted by the chaos tooling but not simulated here.
pub const RESERVED_FAULT_TYPES: &[&str] = &["HttpAbort", "HttpDelay", "HttpPatch", "IoLatency", "IoFault"];

impl FaultType {
    pub const ALL: [FaultType; 5] = [
        FaultType::CpuStress,
        FaultType::MemoryStress,
        FaultType::PodFailure,
        FaultType::NetworkDelay,
        FaultType::NetworkLoss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultType::CpuStress => "CpuStress",
            FaultType::MemoryStress => "MemoryStress",
            FaultType::PodFailure => "PodFailure",
            FaultType::NetworkDelay => "NetworkDelay",
            FaultType::NetworkLoss => "NetworkLoss",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultType {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(t) = Self::ALL.iter().find(|t| t.as_str() == s) {
            return Ok(*t);
        }
        if RESERVED_FAULT_TYPES.contains(&s) {
            Err(PlanError::ReservedType(s.to_string()))
        } else {
            Err(PlanError::UnknownType(s.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaultBehavior {
    CpuStress { load_pct: f64 },
    MemoryStress { bytes: f64 },
    PodFailure,
    NetworkDelay { latency_ms: f64, jitter_ms: f64 },
    NetworkLoss { loss_pct: f64 },
}

impl FaultBehavior {
    pub fn fault_type(&self) -> FaultType {
        match self {
            FaultBehavior::CpuStress { .. } => FaultType::CpuStress,
            FaultBehavior::MemoryStress { .. } => FaultType::MemoryStress,
            FaultBehavior::PodFailure => FaultType::PodFailure,
            FaultBehavior::NetworkDelay { .. } => FaultType::NetworkDelay,
            FaultBehavior::NetworkLoss { .. } => FaultType::NetworkLoss,
        }
    }

    /// Builds a behavior from a loosely typed parameter map. Structural
    /// problems (missing, unknown or non-numeric keys) fail here; ranges are
    /// checked by [`validate_fault`].
    pub fn from_params(kind: FaultType, params: &Map<String, Value>) -> Result<Self, PlanError> {
        let allowed: &[&str] = match kind {
            FaultType::CpuStress => &["load_pct"],
            FaultType::MemoryStress => &["bytes"],
            FaultType::PodFailure => &[],
            FaultType::NetworkDelay => &["latency_ms", "jitter_ms"],
            FaultType::NetworkLoss => &["loss_pct"],
        };
        if let Some(extra) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(PlanError::Param {
                fault_type: kind,
                key: extra.clone(),
                reason: "unknown parameter".into(),
            });
        }
        let num = |key: &str, default: Option<f64>| -> Result<f64, PlanError> {
            match params.get(key) {
                Some(v) => v.as_f64().ok_or_else(|| PlanError::Param {
                    fault_type: kind,
                    key: key.to_string(),
                    reason: "expected a number".into(),
                }),
                None => default.ok_or_else(|| PlanError::Param {
                    fault_type: kind,
                    key: key.to_string(),
                    reason: "missing parameter".into(),
                }),
            }
        };
        Ok(match kind {
            FaultType::CpuStress => FaultBehavior::CpuStress { load_pct: num("load_pct", None)? },
            FaultType::MemoryStress => FaultBehavior::MemoryStress { bytes: num("bytes", None)? },
            FaultType::PodFailure => FaultBehavior::PodFailure,
            FaultType::NetworkDelay => FaultBehavior::NetworkDelay {
                latency_ms: num("latency_ms", None)?,
                jitter_ms: num("jitter_ms", Some(0.0))?,
            },
            FaultType::NetworkLoss => FaultBehavior::NetworkLoss { loss_pct: num("loss_pct", None)? },
        })
    }

    pub fn params(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: f64| {
            m.insert(k.to_string(), number(v));
        };
        match *self {
            FaultBehavior::CpuStress { load_pct } => put("load_pct", load_pct),
            FaultBehavior::MemoryStress { bytes } => put("bytes", bytes),
            FaultBehavior::PodFailure => {}
            FaultBehavior::NetworkDelay { latency_ms, jitter_ms } => {
                put("latency_ms", latency_ms);
                put("jitter_ms", jitter_ms);
            }
            FaultBehavior::NetworkLoss { loss_pct } => put("loss_pct", loss_pct),
        }
        m
    }
}

// Integral values render as integers so plan files stay tidy.
fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultDefinition {
    pub id: String,
    /// Pod cmdb_id or service name.
    pub target: String,
    pub start_time: i64,
    pub duration: u64,
    pub behaviors: BTreeMap<FaultType, FaultBehavior>,
}

impl FaultDefinition {
    pub fn new(id: impl Into<String>, target: impl Into<String>, start_time: i64, duration: u64, behavior: FaultBehavior) -> Self {
        Self {
            id: id.into(),
            target: target.into(),
            start_time,
            duration,
            behaviors: BTreeMap::from([(behavior.fault_type(), behavior)]),
        }
    }

    pub fn end_time(&self) -> i64 {
        self.start_time.saturating_add(self.duration as i64)
    }

    /// Half-open activity window `[start, start + duration)`.
    pub fn is_active(&self, t: i64) -> bool {
        self.start_time <= t && t < self.end_time()
    }

    /// The behavior that names the case in ground truth.
    pub fn primary_type(&self) -> Option<FaultType> {
        self.behaviors.keys().next().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionMode {
    Immediate,
    #[default]
    Scheduled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEntry {
    #[serde(rename = "type")]
    pub fault_type: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

/// Wire/document shape of a fault: plan files, calendar export and REST bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub fault_type: Option<String>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<i64>,
    pub duration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub behaviors: Vec<BehaviorEntry>,
    #[serde(default)]
    pub mode: InjectionMode,
}

impl PlanEntry {
    /// Converts to a definition. Immediate entries (and entries without a
    /// start) take `now` as their start time.
    pub fn to_definition(&self, now: i64) -> Result<(FaultDefinition, InjectionMode), PlanError> {
        let mut behaviors = BTreeMap::new();
        let empty = Map::new();
        let mut add = |type_name: &str, params: &Map<String, Value>| -> Result<(), PlanError> {
            let kind: FaultType = type_name.parse()?;
            let b = FaultBehavior::from_params(kind, params)?;
            if behaviors.insert(kind, b).is_some() {
                return Err(PlanError::DuplicateBehavior(kind));
            }
            Ok(())
        };
        if let Some(t) = &self.fault_type {
            add(t, self.params.as_ref().unwrap_or(&empty))?;
        } else if self.params.is_some() {
            return Err(PlanError::Structure("`params` given without `type`".into()));
        }
        for b in &self.behaviors {
            add(&b.fault_type, &b.params)?;
        }
        let start_time = match (self.mode, self.start) {
            (InjectionMode::Immediate, _) | (_, None) => now,
            (InjectionMode::Scheduled, Some(s)) => s,
        };
        let def = FaultDefinition {
            id: self.id.clone().unwrap_or_default(),
            target: self.target.clone(),
            start_time,
            duration: self.duration,
            behaviors,
        };
        Ok((def, self.mode))
    }

    pub fn from_definition(def: &FaultDefinition, mode: InjectionMode) -> Self {
        let (fault_type, params, behaviors) = if def.behaviors.len() == 1 {
            let b = def.behaviors.values().next().unwrap();
            (Some(b.fault_type().to_string()), Some(b.params()), Vec::new())
        } else {
            let list = def
                .behaviors
                .values()
                .map(|b| BehaviorEntry {
                    fault_type: b.fault_type().to_string(),
                    params: b.params(),
                })
                .collect();
            (None, None, list)
        };
        Self {
            id: Some(def.id.clone()),
            fault_type,
            target: def.target.clone(),
            start: Some(def.start_time),
            duration: def.duration,
            end: Some(def.end_time()),
            params,
            behaviors,
            mode,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanDocument {
    #[serde(default)]
    faults: Vec<PlanEntry>,
}

/// Parses a TOML fault plan into definitions (not yet validated).
pub fn parse_plan(document: &str, now: i64) -> Result<Vec<(FaultDefinition, InjectionMode)>, PlanError> {
    let doc: PlanDocument = toml::from_str(document).map_err(|e| PlanError::Structure(e.to_string()))?;
    doc.faults.iter().map(|e| e.to_definition(now)).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("unknown fault type `{0}`")]
    UnknownType(String),
    #[error("fault type `{0}` is reserved but not supported")]
    ReservedType(String),
    #[error("{fault_type} parameter `{key}`: {reason}")]
    Param {
        fault_type: FaultType,
        key: String,
        reason: String,
    },
    #[error("fault lists behavior {0} twice")]
    DuplicateBehavior(FaultType),
    #[error("malformed fault plan: {0}")]
    Structure(String),
}

/// A broken fault invariant, keyed by the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FaultViolation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FaultViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks a definition against its own invariants and the topology.
pub fn validate_fault(def: &FaultDefinition, topology: &ServiceTopology) -> Vec<FaultViolation> {
    let mut out = Vec::new();
    let mut v = |field: &str, message: String| {
        out.push(FaultViolation {
            field: field.to_string(),
            message,
        })
    };
    if def.duration == 0 {
        v("duration", "duration must be positive".into());
    }
    if def.behaviors.is_empty() {
        v("behaviors", "at least one behavior is required".into());
    }
    if topology.resolve_target(&def.target).is_none() {
        v("target", format!("unknown target `{}`", def.target));
    }
    let in_range = |x: f64, lo: f64, hi: f64| x.is_finite() && x >= lo && x <= hi;
    for (kind, b) in &def.behaviors {
        if b.fault_type() != *kind {
            v("behaviors", format!("behavior keyed {kind} holds {}", b.fault_type()));
        }
        match *b {
            FaultBehavior::CpuStress { load_pct } if !in_range(load_pct, 0.0, 100.0) => {
                v("load_pct", format!("load_pct out of range: {load_pct} not in [0, 100]"))
            }
            FaultBehavior::MemoryStress { bytes } if !(bytes.is_finite() && bytes > 0.0) => {
                v("bytes", format!("bytes out of range: {bytes} must be positive"))
            }
            FaultBehavior::NetworkDelay { latency_ms, jitter_ms } => {
                if !(latency_ms.is_finite() && latency_ms > 0.0) {
                    v("latency_ms", format!("latency_ms out of range: {latency_ms} must be positive"));
                }
                if !(jitter_ms.is_finite() && jitter_ms >= 0.0) {
                    v("jitter_ms", format!("jitter_ms out of range: {jitter_ms} must be >= 0"));
                }
            }
            FaultBehavior::NetworkLoss { loss_pct } if !in_range(loss_pct, 0.0, 100.0) => {
                v("loss_pct", format!("loss_pct out of range: {loss_pct} not in [0, 100]"))
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalendarEntry {
    pub fault: FaultDefinition,
    pub mode: InjectionMode,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalendarError {
    #[error("fault id `{0}` already scheduled")]
    DuplicateId(String),
    #[error("fault `{0}` already started")]
    AlreadyStarted(String),
    #[error("no fault with id `{0}`")]
    UnknownFault(String),
}

/// Schedule of injected faults, kept ordered by start time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultCalendar {
    entries: Vec<CalendarEntry>,
}

impl FaultCalendar {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a calendar from already validated definitions.
    pub fn from_definitions(defs: impl IntoIterator<Item = (FaultDefinition, InjectionMode)>, now: i64) -> Result<Self, CalendarError> {
        let mut cal = Self::new();
        for (def, mode) in defs {
            cal.schedule(def, mode, now)?;
        }
        Ok(cal)
    }

    /// Adds `def`. Immediate faults start at `now`; an empty id is replaced
    /// by the lowest free `fault-<n>`.
    pub fn schedule(&mut self, mut def: FaultDefinition, mode: InjectionMode, now: i64) -> Result<String, CalendarError> {
        if def.id.is_empty() {
            def.id = (0..)
                .map(|n| format!("fault-{n}"))
                .find(|id| self.get(id).is_none())
                .unwrap();
        } else if self.get(&def.id).is_some() {
            return Err(CalendarError::DuplicateId(def.id));
        }
        if mode == InjectionMode::Immediate {
            def.start_time = now;
        }
        let id = def.id.clone();
        let key = (def.start_time, def.id.clone());
        let pos = self
            .entries
            .partition_point(|e| (e.fault.start_time, e.fault.id.clone()) < key);
        self.entries.insert(pos, CalendarEntry { fault: def, mode });
        Ok(id)
    }

    /// Removes a fault that has not started yet.
    pub fn cancel(&mut self, id: &str, now: i64) -> Result<FaultDefinition, CalendarError> {
        let pos = self
            .entries
            .iter()
            .position(|e| e.fault.id == id)
            .ok_or_else(|| CalendarError::UnknownFault(id.to_string()))?;
        if now >= self.entries[pos].fault.start_time {
            return Err(CalendarError::AlreadyStarted(id.to_string()));
        }
        Ok(self.entries.remove(pos).fault)
    }

    pub fn get(&self, id: &str) -> Option<&CalendarEntry> {
        self.entries.iter().find(|e| e.fault.id == id)
    }

    pub fn entries(&self) -> &[CalendarEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Faults with `start <= t < start + duration`.
    pub fn active_faults(&self, t: i64) -> Vec<&FaultDefinition> {
        self.entries
            .iter()
            .map(|e| &e.fault)
            .filter(|f| f.is_active(t))
            .collect()
    }

    /// Validates every entry against the topology.
    pub fn validate(&self, topology: &ServiceTopology) -> Vec<(String, FaultViolation)> {
        self.entries
            .iter()
            .flat_map(|e| {
                validate_fault(&e.fault, topology)
                    .into_iter()
                    .map(|v| (e.fault.id.clone(), v))
            })
            .collect()
    }

    pub fn to_plan_entries(&self) -> Vec<PlanEntry> {
        self.entries
            .iter()
            .map(|e| PlanEntry::from_definition(&e.fault, e.mode))
            .collect()
    }

    /// JSON export consumed by the calendar UI.
    pub fn export_json(&self) -> Value {
        serde_json::json!({ "faults": self.to_plan_entries() })
    }

    /// TOML plan that [`parse_plan`] reads back into this calendar. Every
    /// entry is written as scheduled with its resolved start.
    pub fn to_plan_document(&self) -> String {
        let mut entries = self.to_plan_entries();
        for e in &mut entries {
            e.end = None;
        }
        toml::to_string(&PlanDocument { faults: entries }).expect("plan serializes")
    }

    pub fn from_export_json(value: &Value) -> Result<Self, PlanError> {
        let doc: PlanDocument =
            serde_json::from_value(value.clone()).map_err(|e| PlanError::Structure(e.to_string()))?;
        let mut cal = Self::new();
        for entry in &doc.faults {
            let (def, mode) = entry.to_definition(entry.start.unwrap_or(0))?;
            // Persisted immediate entries keep their recorded start.
            let mut def = def;
            if let Some(s) = entry.start {
                def.start_time = s;
            }
            let id = def.id.clone();
            cal.insert_raw(def, mode).map_err(|_| PlanError::Structure(format!("duplicate id `{id}`")))?;
        }
        Ok(cal)
    }

    fn insert_raw(&mut self, def: FaultDefinition, mode: InjectionMode) -> Result<(), CalendarError> {
        let start = def.start_time;
        let id = self.schedule(def, InjectionMode::Scheduled, start)?;
        if let Some(entry) = self.entries.iter_mut().find(|e| e.fault.id == id) {
            entry.mode = mode;
        }
        Ok(())
    }
}

/// Per-modality visibility weights in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityWeights {
    pub metrics: f64,
    pub logs: f64,
    pub traces: f64,
}

/// How strongly each fault type shows up in each telemetry modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestationMatrix(BTreeMap<FaultType, ModalityWeights>);

impl ManifestationMatrix {
    pub fn new(weights: BTreeMap<FaultType, ModalityWeights>) -> Result<Self, String> {
        for t in FaultType::ALL {
            let Some(w) = weights.get(&t) else {
                return Err(format!("no weights for {t}"));
            };
            for (name, x) in [("metrics", w.metrics), ("logs", w.logs), ("traces", w.traces)] {
                if !(0.0..=1.0).contains(&x) {
                    return Err(format!("{t} {name} weight {x} outside [0, 1]"));
                }
            }
            if w.metrics == 0.0 && w.logs == 0.0 && w.traces == 0.0 {
                return Err(format!("{t} has no visible modality"));
            }
        }
        Ok(Self(weights))
    }

    pub fn weights(&self, t: FaultType) -> ModalityWeights {
        self.0[&t]
    }
}

impl Default for ManifestationMatrix {
    /// Stress faults surface in metrics only, pod faults in metrics and logs,
    /// network faults in all three modalities.
    fn default() -> Self {
        let w = |metrics, logs, traces| ModalityWeights { metrics, logs, traces };
        Self(BTreeMap::from([
            (FaultType::CpuStress, w(1.0, 0.0, 0.0)),
            (FaultType::MemoryStress, w(1.0, 0.0, 0.0)),
            (FaultType::PodFailure, w(1.0, 1.0, 0.0)),
            (FaultType::NetworkDelay, w(1.0, 1.0, 1.0)),
            (FaultType::NetworkLoss, w(1.0, 1.0, 1.0)),
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::default_boutique_topology;

    fn pod_failure(id: &str, start: i64) -> FaultDefinition {
        FaultDefinition::new(id, "frontend-0", start, 60, FaultBehavior::PodFailure)
    }

    #[test]
    fn validate_examples() {
        let topo = default_boutique_topology();
        assert!(validate_fault(&pod_failure("a", 0), &topo).is_empty());

        let loss = FaultDefinition::new("b", "cartservice-1", 0, 60, FaultBehavior::NetworkLoss { loss_pct: 150.0 });
        let v = validate_fault(&loss, &topo);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("loss_pct out of range"));
        assert_eq!(v[0].field, "loss_pct");

        let ghost = FaultDefinition::new("c", "ghost-7", 0, 60, FaultBehavior::PodFailure);
        let v = validate_fault(&ghost, &topo);
        assert!(v[0].message.contains("unknown target"));
    }

    #[test]
    fn service_targets_are_accepted() {
        let topo = default_boutique_topology();
        let f = FaultDefinition::new("s", "cartservice", 0, 10, FaultBehavior::CpuStress { load_pct: 50.0 });
        assert!(validate_fault(&f, &topo).is_empty());
    }

    #[test]
    fn zero_duration_and_empty_behaviors() {
        let topo = default_boutique_topology();
        let mut f = pod_failure("z", 0);
        f.duration = 0;
        f.behaviors.clear();
        let fields: Vec<_> = validate_fault(&f, &topo).into_iter().map(|v| v.field).collect();
        assert_eq!(fields, ["duration", "behaviors"]);
    }

    #[test]
    fn fault_type_parsing() {
        assert_eq!("NetworkDelay".parse::<FaultType>(), Ok(FaultType::NetworkDelay));
        assert!(matches!("HttpAbort".parse::<FaultType>(), Err(PlanError::ReservedType(_))));
        assert!(matches!("Meteor".parse::<FaultType>(), Err(PlanError::UnknownType(_))));
    }

    #[test]
    fn schedule_list_cancel() {
        let mut cal = FaultCalendar::new();
        let id = cal.schedule(pod_failure("", 100), InjectionMode::Scheduled, 0).unwrap();
        assert_eq!(id, "fault-0");
        assert!(cal.get(&id).is_some());
        cal.cancel(&id, 50).unwrap();
        assert!(cal.get(&id).is_none());
    }

    #[test]
    fn cancel_after_start() {
        let mut cal = FaultCalendar::new();
        cal.schedule(pod_failure("x", 100), InjectionMode::Scheduled, 0).unwrap();
        assert_eq!(cal.cancel("x", 100), Err(CalendarError::AlreadyStarted("x".into())));
        assert_eq!(cal.cancel("y", 0), Err(CalendarError::UnknownFault("y".into())));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut cal = FaultCalendar::new();
        cal.schedule(pod_failure("x", 100), InjectionMode::Scheduled, 0).unwrap();
        assert_eq!(
            cal.schedule(pod_failure("x", 200), InjectionMode::Scheduled, 0),
            Err(CalendarError::DuplicateId("x".into()))
        );
    }

    #[test]
    fn immediate_uses_submission_time() {
        let mut cal = FaultCalendar::new();
        cal.schedule(pod_failure("now", 999), InjectionMode::Immediate, 42).unwrap();
        assert_eq!(cal.get("now").unwrap().fault.start_time, 42);
    }

    #[test]
    fn listing_is_ordered_by_start() {
        let mut cal = FaultCalendar::new();
        for (id, start) in [("c", 30), ("a", 10), ("b", 20), ("a2", 10)] {
            cal.schedule(pod_failure(id, start), InjectionMode::Scheduled, 0).unwrap();
        }
        let ids: Vec<_> = cal.entries().iter().map(|e| e.fault.id.as_str()).collect();
        assert_eq!(ids, ["a", "a2", "b", "c"]);
    }

    #[test]
    fn active_faults_half_open() {
        let mut cal = FaultCalendar::new();
        cal.schedule(pod_failure("a", 100), InjectionMode::Scheduled, 0).unwrap();
        cal.schedule(pod_failure("b", 130), InjectionMode::Scheduled, 0).unwrap();
        assert!(cal.active_faults(99).is_empty());
        assert_eq!(cal.active_faults(100).len(), 1);
        assert_eq!(cal.active_faults(140).len(), 2);
        let at_end: Vec<_> = cal.active_faults(160).iter().map(|f| f.id.clone()).collect();
        assert_eq!(at_end, ["b"]);
    }

    #[test]
    fn plan_document_round_trip() {
        let doc = r#"
[[faults]]
id = "cpu-1"
type = "CpuStress"
target = "cartservice-0"
start = 1000
duration = 300
params = { load_pct = 80 }

[[faults]]
id = "net-1"
type = "NetworkDelay"
target = "productcatalogservice"
start = 1200
duration = 60
params = { latency_ms = 200, jitter_ms = 10.5 }

[[faults]]
id = "combo"
target = "frontend-1"
start = 1500
duration = 30
behaviors = [{ type = "CpuStress", params = { load_pct = 10 } }, { type = "PodFailure" }]
"#;
        let defs = parse_plan(doc, 0).unwrap();
        assert_eq!(defs.len(), 3);
        assert_eq!(defs[2].0.behaviors.len(), 2);
        let cal = FaultCalendar::from_definitions(defs, 0).unwrap();
        let again = FaultCalendar::from_definitions(parse_plan(&cal.to_plan_document(), 0).unwrap(), 0).unwrap();
        assert_eq!(again, cal);
        let json = FaultCalendar::from_export_json(&cal.export_json()).unwrap();
        assert_eq!(json, cal);
    }

    #[test]
    fn plan_param_errors() {
        let bad = "[[faults]]\ntype = \"NetworkLoss\"\ntarget = \"x\"\nduration = 5\nparams = { loss = 3 }\n";
        assert!(matches!(parse_plan(bad, 0), Err(PlanError::Param { .. })));
        let missing = "[[faults]]\ntype = \"CpuStress\"\ntarget = \"x\"\nduration = 5\n";
        assert!(matches!(parse_plan(missing, 0), Err(PlanError::Param { .. })));
        let reserved = "[[faults]]\ntype = \"HttpDelay\"\ntarget = \"x\"\nduration = 5\n";
        assert!(matches!(parse_plan(reserved, 0), Err(PlanError::ReservedType(_))));
    }

    #[test]
    fn default_matrix_follows_case_table() {
        let m = ManifestationMatrix::default();
        assert_eq!(m.weights(FaultType::CpuStress).logs, 0.0);
        assert_eq!(m.weights(FaultType::CpuStress).traces, 0.0);
        assert_eq!(m.weights(FaultType::PodFailure).traces, 0.0);
        assert_eq!(m.weights(FaultType::PodFailure).logs, 1.0);
        let net = m.weights(FaultType::NetworkDelay);
        assert_eq!((net.metrics, net.logs, net.traces), (1.0, 1.0, 1.0));
        assert!(ManifestationMatrix::new(m.0.clone()).is_ok());
    }

    #[test]
    fn matrix_rejects_invisible_or_out_of_range() {
        let mut w = ManifestationMatrix::default().0;
        w.get_mut(&FaultType::CpuStress).unwrap().metrics = 0.0;
        assert!(ManifestationMatrix::new(w.clone()).is_err());
        w.get_mut(&FaultType::CpuStress).unwrap().metrics = 1.5;
        assert!(ManifestationMatrix::new(w).is_err());
    }
}
