//! Simulation invariants: row counts, trace well-formedness, fault
//! signatures, determinism and resampling.

use std::collections::{BTreeMap, BTreeSet};

use servo_core::effects::Perturbation;
use servo_core::faults::{FaultBehavior, FaultCalendar, FaultDefinition, InjectionMode};
use servo_core::rng::SimRng;
use servo_core::telemetry::{DatasetWindow, SpanRecord, TelemetryBatch};
use servo_core::topology::{default_boutique_topology, ServiceTopology};
use servo_core::workload::{generate_trace, is_error_message, run_simulation, SimClock, WorkloadProfile, ERROR_UNREACHABLE};

const T0: i64 = 1_700_000_000;

fn calendar(faults: Vec<FaultDefinition>) -> FaultCalendar {
    FaultCalendar::from_definitions(faults.into_iter().map(|f| (f, InjectionMode::Scheduled)), 0).unwrap()
}

fn simulate(topo: &ServiceTopology, cal: &FaultCalendar, step: u64, horizon: u64, seed: u64) -> TelemetryBatch {
    let profile = WorkloadProfile::uniform(topo, 1.0, seed);
    run_simulation(topo, &profile, cal, &SimClock::new(T0, step, horizon).unwrap()).unwrap()
}

/// Checks tree shape for every trace in `spans` and returns the number of traces.
fn check_traces(topo: &ServiceTopology, spans: &[SpanRecord]) -> usize {
    let mut by_trace: BTreeMap<&str, Vec<&SpanRecord>> = BTreeMap::new();
    for s in spans {
        by_trace.entry(&s.trace_id).or_default().push(s);
    }
    let service_of = |cmdb: &str| topo.pod(cmdb).map(|p| p.service.clone()).expect("span on a known pod");
    for (trace, spans) in &by_trace {
        let ids: BTreeSet<&str> = spans.iter().map(|s| s.span_id.as_str()).collect();
        assert_eq!(ids.len(), spans.len(), "duplicate span id in {trace}");
        let roots: Vec<_> = spans.iter().filter(|s| s.is_root()).collect();
        assert_eq!(roots.len(), 1, "trace {trace} must have one root");
        assert_eq!(service_of(&roots[0].cmdb_id), topo.entry_service());
        let by_id: BTreeMap<&str, &&SpanRecord> = spans.iter().map(|s| (s.span_id.as_str(), s)).collect();
        for s in spans.iter().filter(|s| !s.is_root()) {
            let parent = by_id.get(s.parent_span.as_str()).unwrap_or_else(|| panic!("dangling parent in {trace}"));
            let caller = service_of(&parent.cmdb_id);
            let callee = service_of(&s.cmdb_id);
            assert!(
                topo.edges()
                    .iter()
                    .any(|e| e.caller == caller && e.callee == callee && e.operation_name == s.operation_name),
                "span {} ({caller} -> {callee}, {}) follows no edge",
                s.span_id,
                s.operation_name
            );
            // Walking up from any span reaches the root without revisiting.
            let mut seen = BTreeSet::new();
            let mut cur = *s;
            while !cur.is_root() {
                assert!(seen.insert(cur.span_id.as_str()), "cycle in {trace}");
                cur = by_id[cur.parent_span.as_str()];
            }
        }
        for s in spans {
            let children: u64 = spans
                .iter()
                .filter(|c| c.parent_span == s.span_id)
                .map(|c| c.duration)
                .sum();
            assert!(s.duration >= children, "parent shorter than its children in {trace}");
        }
    }
    by_trace.len()
}

#[test]
fn row_count_formula_on_default_topology() {
    let topo = default_boutique_topology();
    let b = simulate(&topo, &FaultCalendar::new(), 1, 60, 1);
    assert_eq!(b.metrics.len(), 38_220);
    let b = simulate(&topo, &FaultCalendar::new(), 15, 900, 1);
    assert_eq!(b.metrics.len(), 60 * (31 * 17 + 11 * 10));
}

#[test]
fn traces_are_well_formed_without_faults() {
    let topo = default_boutique_topology();
    let b = simulate(&topo, &FaultCalendar::new(), 1, 300, 9);
    assert!(check_traces(&topo, &b.spans) > 100);
    assert!(b.spans.iter().all(|s| s.status_code == 200));
    assert!(b.logs.iter().all(|l| !is_error_message(&l.message)));
    assert!(b.ground_truth.labels.iter().all(|l| !l.label.is_anomalous()));
}

#[test]
fn root_covers_children_over_a_thousand_traces() {
    let topo = default_boutique_topology();
    let ops: Vec<String> = topo.callees("frontend").map(|e| e.operation_name.clone()).collect();
    let none = Perturbation::default();
    let mut spans = Vec::new();
    for i in 0..1000u64 {
        let mut rng = SimRng::stream(77, "trace-test", &i.to_string());
        let trace = generate_trace(&topo, &ops[i as usize % ops.len()], T0, &none, &mut rng);
        let root = trace.spans.iter().find(|s| s.is_root()).unwrap();
        let direct: u64 = trace.spans.iter().filter(|s| s.parent_span == root.span_id).map(|s| s.duration).sum();
        assert!(root.duration >= direct);
        spans.extend(trace.spans);
    }
    assert_eq!(check_traces(&topo, &spans), 1000);
}

#[test]
fn traces_stay_well_formed_under_faults() {
    let topo = default_boutique_topology();
    let cal = calendar(vec![
        FaultDefinition::new("loss", "cartservice-1", T0 + 20, 100, FaultBehavior::NetworkLoss { loss_pct: 60.0 }),
        FaultDefinition::new("down", "productcatalogservice", T0 + 50, 60, FaultBehavior::PodFailure),
        FaultDefinition::new(
            "slow",
            "currencyservice-0",
            T0 + 10,
            100,
            FaultBehavior::NetworkDelay { latency_ms: 50.0, jitter_ms: 5.0 },
        ),
    ]);
    let b = simulate(&topo, &cal, 1, 180, 4);
    check_traces(&topo, &b.spans);
    assert!(b.spans.iter().any(|s| s.status_code == 503));
    assert!(b.spans.iter().all(|s| s.timestamp < T0 + 50 || s.timestamp >= T0 + 110 || !s.cmdb_id.starts_with("productcatalogservice")));
}

#[test]
fn network_delay_shifts_edge_latency() {
    // paymentservice is a leaf, so spans on checkout -> payment measure the
    // edge's own latency only.
    let topo = default_boutique_topology();
    let delay = 200.0;
    let jitter = 20.0;
    let cal = calendar(vec![FaultDefinition::new(
        "d",
        "paymentservice-0",
        T0 + 1800,
        1800,
        FaultBehavior::NetworkDelay { latency_ms: delay, jitter_ms: jitter },
    )]);
    let profile = WorkloadProfile {
        arrival_rate: 2.0,
        operation_mix: [("CheckoutService/PlaceOrder".to_string(), 1.0)].into(),
        seed: 11,
    };
    let b = run_simulation(&topo, &profile, &cal, &SimClock::new(T0, 60, 3600).unwrap()).unwrap();
    let edge = topo.edges().iter().find(|e| e.callee == "paymentservice").unwrap();
    let payment: Vec<&SpanRecord> = b.spans.iter().filter(|s| s.operation_name == edge.operation_name).collect();
    let mean_ms = |inside: bool| {
        let v: Vec<f64> = payment
            .iter()
            .filter(|s| (s.timestamp >= T0 + 1800) == inside)
            .map(|s| s.duration as f64 / 1000.0)
            .collect();
        assert!(v.len() > 1000, "too few spans: {}", v.len());
        v.iter().sum::<f64>() / v.len() as f64
    };
    let baseline = mean_ms(false);
    let faulted = mean_ms(true);
    // Baseline mean is the edge's base latency (unit-mean jitter).
    assert!((baseline - edge.base_latency_ms).abs() < 0.05 * edge.base_latency_ms, "{baseline}");
    let sigma = jitter / 3f64.sqrt();
    assert!(((faulted - baseline) - delay).abs() < 3.0 * sigma, "shift {}", faulted - baseline);
}

#[test]
fn stress_faults_stay_out_of_logs() {
    let topo = default_boutique_topology();
    let cal = calendar(vec![
        FaultDefinition::new("cpu", "shippingservice-2", T0 + 300, 600, FaultBehavior::CpuStress { load_pct: 70.0 }),
        FaultDefinition::new("mem", "adservice-0", T0 + 400, 600, FaultBehavior::MemoryStress { bytes: 5e8 }),
    ]);
    let b = simulate(&topo, &cal, 5, 1200, 2);
    assert!(b.logs.iter().all(|l| !is_error_message(&l.message)));
    assert!(b.spans.iter().all(|s| s.status_code == 200));
    let mem = |inside: bool| {
        let v: Vec<f64> = b
            .metrics
            .iter()
            .filter(|m| m.cmdb_id == "adservice-0" && m.kpi_name == "mem_usage_bytes")
            .filter(|m| (m.timestamp >= T0 + 400 && m.timestamp < T0 + 1000) == inside)
            .map(|m| m.value)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mem(true) - mem(false) > 4e8);
}

#[test]
fn pod_failure_signature() {
    let topo = default_boutique_topology();
    let cal = calendar(vec![FaultDefinition::new("down", "cartservice-0", T0 + 120, 240, FaultBehavior::PodFailure)]);
    let b = simulate(&topo, &cal, 1, 600, 3);
    let inside = |t: i64| (T0 + 120..T0 + 360).contains(&t);
    assert!(!b.metrics.iter().any(|m| m.cmdb_id == "cartservice-0" && inside(m.timestamp)));
    assert!(b.metrics.iter().any(|m| m.cmdb_id == "cartservice-0" && !inside(m.timestamp)));
    let unreachable: Vec<_> = b.logs.iter().filter(|l| l.message.starts_with(ERROR_UNREACHABLE)).collect();
    assert!(!unreachable.is_empty());
    assert!(unreachable.iter().all(|l| inside(l.timestamp)));
    assert!(!b.spans.iter().any(|s| s.cmdb_id == "cartservice-0" && inside(s.timestamp)));
    assert_eq!(b.ground_truth.anomalous_timestamps().count(), 240);
}

#[test]
fn identical_inputs_give_identical_batches() {
    let topo = default_boutique_topology();
    let cal = calendar(vec![FaultDefinition::new(
        "l",
        "emailservice-1",
        T0 + 30,
        30,
        FaultBehavior::NetworkLoss { loss_pct: 30.0 },
    )]);
    let a = simulate(&topo, &cal, 1, 120, 5);
    let b = simulate(&topo, &cal, 1, 120, 5);
    assert_eq!(a, b);
    assert_eq!(a.content_hash(), b.content_hash());
    let c = simulate(&topo, &cal, 1, 120, 6);
    assert_ne!(a.content_hash(), c.content_hash());
}

#[test]
fn resampling_one_second_series_at_fifteen() {
    let topo = default_boutique_topology();
    let b = simulate(&topo, &FaultCalendar::new(), 1, 60, 8);
    let s = b.slice(&DatasetWindow::new(T0, T0 + 60, 15).unwrap()).unwrap();
    let series = 31 * 17 + 11 * 10;
    // 60 one-second rows per series become 4.
    assert_eq!(s.metrics.len(), series * 4);
    let brute = {
        let mut n = 0;
        let mut last_bucket = None;
        for t in 0..60 {
            let bucket = t / 15;
            if last_bucket != Some(bucket) {
                n += 1;
                last_bucket = Some(bucket);
            }
        }
        n
    };
    assert_eq!(s.metrics.len() / series, brute);
    let full = b.slice(&b.window).unwrap();
    assert_eq!(full, b);
}
