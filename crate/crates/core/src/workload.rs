//! Workload simulation: synthetic requests walk the call graph and produce
//! spans, logs and KPI samples, perturbed by whatever faults are active.
//!
//! The simulation advances in fixed ticks. At each tick every pod emits one
//! row per container KPI and every service one row per service KPI; the
//! number of user requests arriving during the tick is Poisson distributed
//! with mean `arrival_rate * step`. Each request becomes one trace.
//!
//! All randomness comes from [`SimRng`] streams keyed by what is being drawn
//! (KPI and entity, tick, request index), so output depends only on the
//! inputs and not on iteration order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effects::{combined_effects, Perturbation};
use crate::faults::{FaultCalendar, FaultViolation, ManifestationMatrix};
use crate::kpi::{sample_spec, KpiCatalog};
use crate::rng::SimRng;
use crate::telemetry::{format_date, DatasetWindow, LogRecord, MetricRecord, SpanRecord, TelemetryBatch};
use crate::topology::{CallEdge, ServiceKind, ServiceTopology};
use crate::truth::ground_truth;

/// Default sampling step for scenario runs, in seconds.
pub const DEFAULT_STEP: u64 = 15;
/// Longest horizon a single run may cover, in seconds (seven days).
pub const DEFAULT_MAX_HORIZON: u64 = 7 * 24 * 3600;

/// Sigma of the log-normal latency multiplier.
const LATENCY_SIGMA: f64 = 0.25;
/// Own processing time of the entry span before it calls downstream.
const ROOT_LATENCY_MS: f64 = 1.0;

pub const ERROR_UNREACHABLE: &str = "pod unable to connect";
pub const ERROR_RETRY: &str = "retrying request";
pub const ERROR_SLOW: &str = "slow upstream response";
/// Prefixes of every error-template log message.
pub const ERROR_TEMPLATES: [&str; 3] = [ERROR_UNREACHABLE, ERROR_RETRY, ERROR_SLOW];

pub fn is_error_message(message: &str) -> bool {
    ERROR_TEMPLATES.iter().any(|p| message.starts_with(p))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("calendar does not match the topology: {}", describe(.0))]
    InvalidCalendar(Vec<(String, FaultViolation)>),
    #[error("horizon of {horizon} s exceeds the maximum of {max} s")]
    HorizonOverflow { horizon: u64, max: u64 },
    #[error("invalid clock: {0}")]
    InvalidClock(String),
    #[error("invalid workload profile: {0}")]
    InvalidProfile(String),
}

fn describe(v: &[(String, FaultViolation)]) -> String {
    v.iter()
        .map(|(id, v)| format!("{id}: {v}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Simulated time: ticks at `start, start + step, ...` up to `start + horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    pub start: i64,
    pub step: u64,
    pub horizon: u64,
}

impl SimClock {
    pub fn new(start: i64, step: u64, horizon: u64) -> Result<Self, SimError> {
        let c = Self { start, step, horizon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.step == 0 {
            return Err(SimError::InvalidClock("step must be positive".into()));
        }
        if self.horizon < self.step {
            return Err(SimError::InvalidClock(format!(
                "horizon {} is shorter than step {}",
                self.horizon, self.step
            )));
        }
        if !self.horizon.is_multiple_of(self.step) {
            return Err(SimError::InvalidClock(format!(
                "horizon {} is not a multiple of step {}",
                self.horizon, self.step
            )));
        }
        Ok(())
    }

    pub fn ticks(&self) -> u64 {
        self.horizon / self.step
    }

    pub fn end(&self) -> i64 {
        self.start + self.horizon as i64
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> {
        let (start, step) = (self.start, self.step as i64);
        (0..self.ticks() as i64).map(move |i| start + i * step)
    }

    pub fn window(&self) -> DatasetWindow {
        DatasetWindow::new(self.start, self.end(), self.step).expect("valid clock gives a valid window")
    }
}

/// User traffic hitting the entry service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    /// Requests per second.
    pub arrival_rate: f64,
    /// Entry operation name → probability.
    pub operation_mix: BTreeMap<String, f64>,
    pub seed: u64,
}

impl WorkloadProfile {
    /// Equal weight on every operation the entry service exposes downstream.
    pub fn uniform(topology: &ServiceTopology, arrival_rate: f64, seed: u64) -> Self {
        let mut ops: Vec<String> = topology
            .callees(topology.entry_service())
            .map(|e| e.operation_name.clone())
            .collect();
        ops.sort();
        ops.dedup();
        let w = 1.0 / ops.len().max(1) as f64;
        Self {
            arrival_rate,
            operation_mix: ops.into_iter().map(|o| (o, w)).collect(),
            seed,
        }
    }

    pub fn from_toml(document: &str) -> Result<Self, SimError> {
        toml::from_str(document).map_err(|e| SimError::InvalidProfile(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self, topology: &ServiceTopology) -> Result<(), SimError> {
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(SimError::InvalidProfile(format!(
                "arrival_rate must be positive, got {}",
                self.arrival_rate
            )));
        }
        if self.operation_mix.is_empty() {
            return Err(SimError::InvalidProfile("operation_mix is empty".into()));
        }
        let entry = topology.entry_service();
        for (op, w) in &self.operation_mix {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(SimError::InvalidProfile(format!("weight of `{op}` must be >= 0, got {w}")));
            }
            if !topology.callees(entry).any(|e| &e.operation_name == op) {
                return Err(SimError::InvalidProfile(format!(
                    "operation `{op}` is not called by entry service `{entry}`"
                )));
            }
        }
        let total: f64 = self.operation_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidProfile(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    fn pick_operation(&self, u: f64) -> &str {
        let mut acc = 0.0;
        let mut last = "";
        for (op, w) in &self.operation_mix {
            if *w == 0.0 {
                continue;
            }
            acc += w;
            last = op;
            if u <= acc {
                return op;
            }
        }
        last
    }
}

/// Everything besides topology, profile, calendar and clock that shapes a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub catalog: KpiCatalog,
    pub matrix: ManifestationMatrix,
    pub max_horizon: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            catalog: KpiCatalog::default(),
            matrix: ManifestationMatrix::default(),
            max_horizon: DEFAULT_MAX_HORIZON,
        }
    }
}

/// A log line produced while generating a trace, before ids are assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingLog {
    pub timestamp: i64,
    pub cmdb_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub spans: Vec<SpanRecord>,
    pub logs: Vec<PendingLog>,
}

/// One user request: a root span on an entry pod, the call for
/// `entry_operation`, and a depth-first expansion of everything below it.
///
/// Returns an empty trace when `entry_operation` is not an edge of the entry
/// service or when no entry pod is up.
pub fn generate_trace(
    topology: &ServiceTopology,
    entry_operation: &str,
    t: i64,
    effects: &Perturbation,
    rng: &mut SimRng,
) -> Trace {
    let entry = topology.entry_service();
    let Some(edge) = topology
        .callees(entry)
        .find(|e| e.operation_name == entry_operation)
    else {
        return Trace::default();
    };
    let mut g = TraceBuilder {
        topology,
        effects,
        rng,
        timestamp: t,
        trace_id: String::new(),
        out: Trace::default(),
    };
    g.trace_id = g.rng.hex_id(16);
    let Some(root_pod) = g.pick_pod(None, entry, entry_operation) else {
        return Trace::default();
    };
    let root_id = g.rng.hex_id(8);
    let own = ms_to_us(ROOT_LATENCY_MS * g.rng.unit_lognormal(LATENCY_SIGMA));
    let (child, status) = g.call(&root_id, &root_pod, edge).unwrap_or((0, 200));
    let message = normal_message(topology, entry, entry_operation);
    g.log(&root_pod, message);
    g.out.spans.push(SpanRecord {
        timestamp: t,
        cmdb_id: root_pod,
        parent_span: String::new(),
        span_id: root_id,
        trace_id: g.trace_id.clone(),
        duration: own + child,
        span_type: "http".into(),
        status_code: if status == 200 { 200 } else { 500 },
        operation_name: entry_operation.to_string(),
    });
    g.out
}

fn ms_to_us(ms: f64) -> u64 {
    (ms.max(0.0) * 1000.0).round() as u64
}

fn normal_message(topology: &ServiceTopology, service: &str, op: &str) -> String {
    match topology.service(service).map(|s| s.kind) {
        Some(ServiceKind::Datastore) => format!("cache hit op={op}"),
        _ if service.contains("checkout") => format!("checkout complete op={op}"),
        _ => format!("request served op={op}"),
    }
}

struct TraceBuilder<'a> {
    topology: &'a ServiceTopology,
    effects: &'a Perturbation,
    rng: &'a mut SimRng,
    timestamp: i64,
    trace_id: String,
    out: Trace,
}

impl TraceBuilder<'_> {
    fn log(&mut self, cmdb_id: &str, message: String) {
        self.out.logs.push(PendingLog {
            timestamp: self.timestamp,
            cmdb_id: cmdb_id.to_string(),
            message,
        });
    }

    /// Uniform pod of `service`; a pod that is down makes the caller log the
    /// failed connection and the call moves to a live sibling.
    fn pick_pod(&mut self, caller: Option<&str>, service: &str, op: &str) -> Option<String> {
        let pods = self.topology.pods_of(service).ok()?;
        if pods.is_empty() {
            return None;
        }
        let chosen = pods[self.rng.below(pods.len())];
        let Some(&log_p) = self.effects.down_pods.get(&chosen.cmdb_id) else {
            return Some(chosen.cmdb_id.clone());
        };
        if let Some(caller) = caller {
            if self.rng.bernoulli(log_p) {
                let msg = format!("{ERROR_UNREACHABLE}: {} op={op}", chosen.cmdb_id);
                self.log(caller, msg);
            }
        }
        let live: Vec<_> = pods.iter().filter(|p| !self.effects.is_down(&p.cmdb_id)).collect();
        if live.is_empty() {
            return None;
        }
        Some(live[self.rng.below(live.len())].cmdb_id.clone())
    }

    /// Emits the span for `edge` (and its subtree). Returns its duration and
    /// status, or `None` when no callee pod is up.
    fn call(&mut self, parent: &str, caller_pod: &str, edge: &CallEdge) -> Option<(u64, u16)> {
        let callee_pod = self.pick_pod(Some(caller_pod), &edge.callee, &edge.operation_name)?;
        let span_id = self.rng.hex_id(8);
        let touches = |s: &str| edge.caller == s || edge.callee == s;

        let mut own_ms = edge.base_latency_ms * self.rng.unit_lognormal(LATENCY_SIGMA);
        for d in self.effects.delays.iter().filter(|d| touches(&d.service)) {
            let extra = (d.latency_ms + self.rng.uniform_range(-d.jitter_ms, d.jitter_ms)).max(0.0);
            own_ms += extra;
            if self.rng.bernoulli(d.log_probability) {
                let msg = format!("{ERROR_SLOW} from {}, waited {extra:.0} ms", edge.callee);
                self.log(caller_pod, msg);
            }
        }
        let mut lost = false;
        for l in self.effects.losses.iter().filter(|l| touches(&l.service)) {
            if self.rng.bernoulli(l.probability) {
                lost = true;
                if self.rng.bernoulli(l.log_probability) {
                    let msg = format!("{ERROR_RETRY} to {} op={}", edge.callee, edge.operation_name);
                    self.log(caller_pod, msg);
                }
                break;
            }
        }

        let (children, status) = if lost {
            (0, 503)
        } else {
            let mut total = 0;
            let mut status = 200;
            let edges: Vec<&CallEdge> = self.topology.callees(&edge.callee).collect();
            for child in edges {
                if let Some((d, s)) = self.call(&span_id, &callee_pod, child) {
                    total += d;
                    if s != 200 {
                        status = 500;
                    }
                }
            }
            let msg = normal_message(self.topology, &edge.callee, &edge.operation_name);
            self.log(&callee_pod, msg);
            (total, status)
        };
        let duration = ms_to_us(own_ms) + children;
        self.out.spans.push(SpanRecord {
            timestamp: self.timestamp,
            cmdb_id: callee_pod,
            parent_span: parent.to_string(),
            span_id,
            trace_id: self.trace_id.clone(),
            duration,
            span_type: "rpc".into(),
            status_code: status,
            operation_name: edge.operation_name.clone(),
        });
        Some((duration, status))
    }
}

/// Simulates the window described by `clock` with default KPIs and matrix.
pub fn run_simulation(
    topology: &ServiceTopology,
    profile: &WorkloadProfile,
    calendar: &FaultCalendar,
    clock: &SimClock,
) -> Result<TelemetryBatch, SimError> {
    run_simulation_with(&SimConfig::default(), topology, profile, calendar, clock)
}

pub fn run_simulation_with(
    config: &SimConfig,
    topology: &ServiceTopology,
    profile: &WorkloadProfile,
    calendar: &FaultCalendar,
    clock: &SimClock,
) -> Result<TelemetryBatch, SimError> {
    clock.validate()?;
    if clock.horizon > config.max_horizon {
        return Err(SimError::HorizonOverflow {
            horizon: clock.horizon,
            max: config.max_horizon,
        });
    }
    profile.validate(topology)?;
    let violations = calendar.validate(topology);
    if !violations.is_empty() {
        return Err(SimError::InvalidCalendar(violations));
    }

    let catalog = &config.catalog;
    let seed = profile.seed;
    let per_tick = topology.pods().len() * catalog.container_kpis().len()
        + topology.services().len() * catalog.service_kpis().len();
    let mut metrics = Vec::with_capacity(per_tick * clock.ticks() as usize);
    let mut spans = Vec::new();
    let mut pending = Vec::new();

    for t in clock.timestamps() {
        let active = calendar.active_faults(t);
        let effects = combined_effects(active, &config.matrix, topology, t);
        let tick_key = t as u64;

        for pod in topology.pods() {
            if effects.silenced_metrics.contains(&pod.cmdb_id) {
                continue;
            }
            for spec in catalog.container_kpis() {
                let base = sample_spec(spec, &pod.cmdb_id, tick_key, seed);
                metrics.push(MetricRecord {
                    timestamp: t,
                    cmdb_id: pod.cmdb_id.clone(),
                    kpi_name: spec.name.clone(),
                    value: spec.clamp(base + effects.pod_delta(&pod.cmdb_id, &spec.name)),
                });
            }
        }
        for service in topology.services() {
            for spec in catalog.service_kpis() {
                let base = sample_spec(spec, &service.name, tick_key, seed);
                metrics.push(MetricRecord {
                    timestamp: t,
                    cmdb_id: service.name.clone(),
                    kpi_name: spec.name.clone(),
                    value: spec.clamp(base + effects.service_delta(&service.name, &spec.name)),
                });
            }
        }

        let mut traffic = SimRng::stream(seed, "traffic", &t.to_string());
        let requests = traffic.poisson(profile.arrival_rate * clock.step as f64);
        for r in 0..requests {
            let arrival = t + traffic.below(clock.step as usize) as i64;
            let op = profile.pick_operation(traffic.uniform());
            let mut rng = SimRng::stream(seed, "trace", &format!("{t}:{r}"));
            let trace = generate_trace(topology, op, arrival, &effects, &mut rng);
            spans.extend(trace.spans);
            pending.extend(trace.logs);
        }
    }

    // Stable sort keeps generation order among equal keys, so ids are
    // deterministic and already in canonical order.
    pending.sort_by(|a: &PendingLog, b: &PendingLog| (a.timestamp, &a.cmdb_id).cmp(&(b.timestamp, &b.cmdb_id)));
    let logs = pending
        .into_iter()
        .enumerate()
        .map(|(i, p)| LogRecord {
            log_id: format!("log-{i:08}"),
            date: format_date(p.timestamp),
            timestamp: p.timestamp,
            cmdb_id: p.cmdb_id,
            message: p.message,
        })
        .collect();

    let mut batch = TelemetryBatch {
        window: clock.window(),
        kpis: catalog.layout(),
        metrics,
        logs,
        spans,
        ground_truth: ground_truth(calendar, clock, topology),
    };
    batch.canonicalize();
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{default_boutique_topology, Service};

    fn two_service_topology() -> ServiceTopology {
        ServiceTopology::new(
            vec![
                Service { name: "web".into(), kind: ServiceKind::Frontend, replica_count: 1 },
                Service { name: "x".into(), kind: ServiceKind::Backend, replica_count: 2 },
            ],
            vec!["n0".into()],
            vec![CallEdge {
                caller: "web".into(),
                callee: "x".into(),
                operation_name: "Get".into(),
                base_latency_ms: 3.0,
            }],
            "web",
            None,
        )
        .unwrap()
    }

    #[test]
    fn clock_rules() {
        assert!(SimClock::new(0, 0, 10).is_err());
        assert!(SimClock::new(0, 15, 10).is_err());
        assert!(SimClock::new(0, 15, 40).is_err());
        assert_eq!(SimClock::new(0, 15, 60).unwrap().ticks(), 4);
    }

    #[test]
    fn single_edge_gives_two_spans() {
        let topo = two_service_topology();
        let mut rng = SimRng::stream(1, "t", "");
        let trace = generate_trace(&topo, "Get", 10, &Perturbation::default(), &mut rng);
        assert_eq!(trace.spans.len(), 2);
        let root = trace.spans.iter().find(|s| s.is_root()).unwrap();
        let child = trace.spans.iter().find(|s| !s.is_root()).unwrap();
        assert_eq!(child.parent_span, root.span_id);
        assert!(child.cmdb_id.starts_with("x-"));
        assert!(root.duration >= child.duration);
        assert!(trace.spans.iter().all(|s| s.status_code == 200));
    }

    #[test]
    fn profile_validation() {
        let topo = default_boutique_topology();
        let p = WorkloadProfile::uniform(&topo, 1.0, 7);
        assert!(p.validate(&topo).is_ok());
        let mut bad = p.clone();
        bad.operation_mix.insert("Nope".into(), 0.0);
        assert!(bad.validate(&topo).is_err());
        let mut skew = p.clone();
        *skew.operation_mix.values_mut().next().unwrap() += 0.1;
        assert!(skew.validate(&topo).is_err());
        assert_eq!(WorkloadProfile::from_toml(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn row_count_for_one_minute() {
        let topo = default_boutique_topology();
        let profile = WorkloadProfile::uniform(&topo, 1.0, 3);
        let clock = SimClock::new(1_700_000_000, 1, 60).unwrap();
        let b = run_simulation(&topo, &profile, &FaultCalendar::new(), &clock).unwrap();
        assert_eq!(b.metrics.len(), 60 * (31 * 17 + 11 * 10));
        assert!(b.records_in_window());
        assert!(b.ground_truth.labels.iter().all(|l| !l.label.is_anomalous()));
    }

    #[test]
    fn horizon_limit() {
        let topo = default_boutique_topology();
        let profile = WorkloadProfile::uniform(&topo, 1.0, 3);
        let clock = SimClock::new(0, 15, DEFAULT_MAX_HORIZON + 15).unwrap();
        assert!(matches!(
            run_simulation(&topo, &profile, &FaultCalendar::new(), &clock),
            Err(SimError::HorizonOverflow { .. })
        ));
    }
}
