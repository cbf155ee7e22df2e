//! How an active fault perturbs each telemetry modality.
//!
//! [`apply_effects`] turns one fault into a [`Perturbation`]; perturbations of
//! overlapping faults are merged additively on KPI deltas and by union on
//! everything else. Every effect is scaled by the fault type's weights in the
//! [`ManifestationMatrix`], and zero-valued deltas are dropped so that a
//! zero-severity fault is the identity.

use std::collections::{BTreeMap, BTreeSet};

use crate::faults::{FaultBehavior, FaultDefinition, FaultType, ManifestationMatrix};
use crate::topology::ServiceTopology;

/// Extra latency on every call edge incident to `service`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDelay {
    pub service: String,
    pub latency_ms: f64,
    pub jitter_ms: f64,
    pub log_probability: f64,
}

/// Dropped calls on every edge incident to `service`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLoss {
    pub service: String,
    pub probability: f64,
    pub log_probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perturbation {
    /// cmdb_id → kpi → additive delta.
    pub pod_kpis: BTreeMap<String, BTreeMap<String, f64>>,
    /// service → kpi → additive delta.
    pub service_kpis: BTreeMap<String, BTreeMap<String, f64>>,
    /// Pods that emit no metric rows.
    pub silenced_metrics: BTreeSet<String>,
    /// Pods that cannot serve calls; callers reroute to siblings.
    pub down_pods: BTreeMap<String, f64>,
    pub delays: Vec<EdgeDelay>,
    pub losses: Vec<EdgeLoss>,
}

impl Perturbation {
    pub fn is_identity(&self) -> bool {
        self == &Perturbation::default()
    }

    pub fn merge(&mut self, other: Perturbation) {
        for (target, map) in [(&mut self.pod_kpis, other.pod_kpis), (&mut self.service_kpis, other.service_kpis)] {
            for (entity, deltas) in map {
                let slot = target.entry(entity).or_default();
                for (kpi, d) in deltas {
                    *slot.entry(kpi).or_insert(0.0) += d;
                }
            }
        }
        self.silenced_metrics.extend(other.silenced_metrics);
        for (pod, p) in other.down_pods {
            let slot = self.down_pods.entry(pod).or_insert(0.0);
            *slot = slot.max(p);
        }
        self.delays.extend(other.delays);
        self.losses.extend(other.losses);
    }

    pub fn pod_delta(&self, cmdb_id: &str, kpi: &str) -> f64 {
        self.pod_kpis.get(cmdb_id).and_then(|m| m.get(kpi)).copied().unwrap_or(0.0)
    }

    pub fn service_delta(&self, service: &str, kpi: &str) -> f64 {
        self.service_kpis.get(service).and_then(|m| m.get(kpi)).copied().unwrap_or(0.0)
    }

    pub fn is_down(&self, cmdb_id: &str) -> bool {
        self.down_pods.contains_key(cmdb_id)
    }

    fn add_pod(&mut self, pod: &str, kpi: &str, delta: f64) {
        if delta != 0.0 {
            *self
                .pod_kpis
                .entry(pod.to_string())
                .or_default()
                .entry(kpi.to_string())
                .or_insert(0.0) += delta;
        }
    }

    fn add_service(&mut self, service: &str, kpi: &str, delta: f64) {
        if delta != 0.0 {
            *self
                .service_kpis
                .entry(service.to_string())
                .or_default()
                .entry(kpi.to_string())
                .or_insert(0.0) += delta;
        }
    }
}

/// Perturbation caused by `fault` at time `t`; empty outside its window or
/// when the target does not resolve.
pub fn apply_effects(
    fault: &FaultDefinition,
    matrix: &ManifestationMatrix,
    topology: &ServiceTopology,
    t: i64,
) -> Perturbation {
    let mut p = Perturbation::default();
    if !fault.is_active(t) {
        return p;
    }
    let Some(pods) = topology.resolve_target(&fault.target) else {
        return p;
    };
    let Some(service) = pods.first().map(|pod| pod.service.clone()) else {
        return p;
    };
    for behavior in fault.behaviors.values() {
        let w = matrix.weights(behavior.fault_type());
        match *behavior {
            FaultBehavior::CpuStress { load_pct } => {
                let m = load_pct * w.metrics;
                for pod in &pods {
                    p.add_pod(&pod.cmdb_id, "cpu_usage_pct", m);
                    p.add_pod(&pod.cmdb_id, "cpu_throttled_s", m / 100.0 * 0.5);
                }
                p.add_service(&service, "p50_latency", m * 0.05);
                p.add_service(&service, "p90_latency", m * 0.1);
                p.add_service(&service, "p99_latency", m * 0.2);
            }
            FaultBehavior::MemoryStress { bytes } => {
                let m = bytes * w.metrics;
                for pod in &pods {
                    p.add_pod(&pod.cmdb_id, "mem_usage_bytes", m);
                    p.add_pod(&pod.cmdb_id, "mem_working_set", m);
                }
            }
            FaultBehavior::PodFailure => {
                for pod in &pods {
                    if w.metrics > 0.0 {
                        p.silenced_metrics.insert(pod.cmdb_id.clone());
                    }
                    let slot = p.down_pods.entry(pod.cmdb_id.clone()).or_insert(0.0);
                    *slot = slot.max(w.logs);
                }
            }
            FaultBehavior::NetworkDelay { latency_ms, jitter_ms } => {
                let m = latency_ms * w.metrics;
                p.add_service(&service, "p50_latency", m * 0.5);
                p.add_service(&service, "p90_latency", m * 0.9);
                p.add_service(&service, "p99_latency", m);
                if w.traces > 0.0 && latency_ms > 0.0 {
                    p.delays.push(EdgeDelay {
                        service: service.clone(),
                        latency_ms: latency_ms * w.traces,
                        jitter_ms: jitter_ms * w.traces,
                        log_probability: w.logs,
                    });
                }
            }
            FaultBehavior::NetworkLoss { loss_pct } => {
                let ratio = loss_pct / 100.0 * w.metrics;
                p.add_service(&service, "error_rate", ratio);
                p.add_service(&service, "success_rate", -ratio);
                p.add_service(&service, "retry_rate", ratio * 0.5);
                for pod in &pods {
                    p.add_pod(&pod.cmdb_id, "net_drop_tx", loss_pct * w.metrics);
                    p.add_pod(&pod.cmdb_id, "net_drop_rx", loss_pct * w.metrics);
                }
                let prob = loss_pct / 100.0 * w.traces;
                if prob > 0.0 {
                    p.losses.push(EdgeLoss {
                        service: service.clone(),
                        probability: prob,
                        log_probability: w.logs,
                    });
                }
            }
        }
    }
    p
}

/// Merged perturbation of every fault active at `t`.
pub fn combined_effects<'a>(
    faults: impl IntoIterator<Item = &'a FaultDefinition>,
    matrix: &ManifestationMatrix,
    topology: &ServiceTopology,
    t: i64,
) -> Perturbation {
    let mut out = Perturbation::default();
    for f in faults {
        out.merge(apply_effects(f, matrix, topology, t));
    }
    out
}

/// Fault types whose effects reach `modality` under `matrix`.
pub fn visible_types(matrix: &ManifestationMatrix, modality: crate::telemetry::Modality) -> Vec<FaultType> {
    use crate::telemetry::Modality;
    FaultType::ALL
        .into_iter()
        .filter(|t| {
            let w = matrix.weights(*t);
            match modality {
                Modality::Metrics => w.metrics > 0.0,
                Modality::Logs => w.logs > 0.0,
                Modality::Traces => w.traces > 0.0,
            }
        })
        .collect()
}
