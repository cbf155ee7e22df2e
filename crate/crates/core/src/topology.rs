//! Static structure of the simulated microservice system.
//!
//! A [`ServiceTopology`] is built either from [`default_boutique_topology`]
//! or parsed from a TOML document with [`load_topology`]. Both paths go
//! through [`ServiceTopology::validate`], so every value handed out by this
//! module satisfies the structural invariants (unique names, replica counts,
//! declared nodes, a single frontend entry that reaches every service).
//!
//! Document schema (version 1):
//!
//! ```toml
//! version = 1
//! entry = "frontend"
//! nodes = ["node-0", "node-1"]
//!
//! [[services]]
//! name = "frontend"
//! kind = "frontend"
//! replicas = 3
//!
//! [[edges]]
//! caller = "frontend"
//! callee = "adservice"
//! operation = "AdService/GetAds"
//! base_latency_ms = 4.0
//!
//! # optional; when absent pods are placed round-robin over `nodes`
//! [[pods]]
//! cmdb_id = "frontend-0"
//! service = "frontend"
//! node = "node-0"
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TOPOLOGY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Frontend,
    Backend,
    Datastore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub name: String,
    pub kind: ServiceKind,
    #[serde(rename = "replicas")]
    pub replica_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodInstance {
    pub cmdb_id: String,
    pub service: String,
    #[serde(rename = "node")]
    pub node_id: String,
}

impl PodInstance {
    /// Replica index parsed from the `<service>-<index>` cmdb id.
    pub fn index(&self) -> Option<u32> {
        self.cmdb_id
            .strip_prefix(self.service.as_str())
            .and_then(|rest| rest.strip_prefix('-'))
            .and_then(|idx| idx.parse().ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallEdge {
    pub caller: String,
    pub callee: String,
    #[serde(rename = "operation")]
    pub operation_name: String,
    pub base_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceTopology {
    services: Vec<Service>,
    pods: Vec<PodInstance>,
    nodes: Vec<String>,
    edges: Vec<CallEdge>,
    entry_service: String,
}

/// One broken invariant, named so callers can match on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology document does not parse: {0}")]
    Parse(String),
    #[error("topology is invalid: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("unknown service `{0}`")]
    UnknownService(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ServiceTopology {
    /// Builds and validates a topology. Pods default to round-robin placement
    /// over `nodes` when `pods` is `None`.
    pub fn new(
        services: Vec<Service>,
        nodes: Vec<String>,
        edges: Vec<CallEdge>,
        entry_service: impl Into<String>,
        pods: Option<Vec<PodInstance>>,
    ) -> Result<Self, TopologyError> {
        let pods = pods.unwrap_or_else(|| round_robin_pods(&services, &nodes));
        let topology = Self {
            services,
            pods,
            nodes,
            edges,
            entry_service: entry_service.into(),
        };
        let violations = topology.validate();
        if violations.is_empty() {
            Ok(topology)
        } else {
            Err(TopologyError::Validation(violations))
        }
    }

    pub fn services(&self) -> &[Service] {
        &self.services
    }

    pub fn pods(&self) -> &[PodInstance] {
        &self.pods
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[CallEdge] {
        &self.edges
    }

    pub fn entry_service(&self) -> &str {
        &self.entry_service
    }

    pub fn service(&self, name: &str) -> Option<&Service> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn pod(&self, cmdb_id: &str) -> Option<&PodInstance> {
        self.pods.iter().find(|p| p.cmdb_id == cmdb_id)
    }

    /// Pods of `service` in replica-index order.
    pub fn pods_of(&self, service: &str) -> Result<Vec<&PodInstance>, TopologyError> {
        if self.service(service).is_none() {
            return Err(TopologyError::UnknownService(service.to_string()));
        }
        let mut pods: Vec<&PodInstance> =
            self.pods.iter().filter(|p| p.service == service).collect();
        pods.sort_by_key(|p| p.index().unwrap_or(u32::MAX));
        Ok(pods)
    }

    /// Outgoing edges of `service`, in declaration order.
    pub fn callees(&self, service: &str) -> impl Iterator<Item = &CallEdge> {
        let service = service.to_string();
        self.edges.iter().filter(move |e| e.caller == service)
    }

    pub fn incoming(&self, service: &str) -> impl Iterator<Item = &CallEdge> {
        let service = service.to_string();
        self.edges.iter().filter(move |e| e.callee == service)
    }

    /// Resolves a fault target: a pod id maps to itself, a service name to all
    /// of its replicas. Returns `None` for unknown targets.
    pub fn resolve_target(&self, target: &str) -> Option<Vec<&PodInstance>> {
        if let Some(pod) = self.pod(target) {
            return Some(vec![pod]);
        }
        self.pods_of(target).ok()
    }

    /// Every broken invariant, in a stable order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut v = |invariant: &'static str, detail: String| {
            out.push(Violation { invariant, detail })
        };

        let mut names = BTreeSet::new();
        for s in &self.services {
            if s.name.is_empty() {
                v("service-name", "service with empty name".into());
            }
            if !names.insert(s.name.as_str()) {
                v("unique-service", format!("service `{}` declared twice", s.name));
            }
            if s.replica_count < 1 {
                v("replica-count", format!("service `{}` has replica_count 0", s.name));
            }
        }

        let nodes: BTreeSet<&str> = self.nodes.iter().map(String::as_str).collect();
        if nodes.len() != self.nodes.len() {
            v("unique-node", "node declared twice".into());
        }

        let mut pod_ids = BTreeSet::new();
        let mut per_service: BTreeMap<&str, u32> = BTreeMap::new();
        for p in &self.pods {
            if !pod_ids.insert(p.cmdb_id.as_str()) {
                v("unique-pod", format!("pod `{}` declared twice", p.cmdb_id));
            }
            if !names.contains(p.service.as_str()) {
                v(
                    "pod-service",
                    format!("pod `{}` belongs to undeclared service `{}`", p.cmdb_id, p.service),
                );
            }
            if !nodes.contains(p.node_id.as_str()) {
                v(
                    "pod-node",
                    format!("pod `{}` placed on undeclared node `{}`", p.cmdb_id, p.node_id),
                );
            }
            if p.index().is_none() {
                v(
                    "cmdb-id-format",
                    format!("pod `{}` is not named `{}-<index>`", p.cmdb_id, p.service),
                );
            }
            *per_service.entry(p.service.as_str()).or_default() += 1;
        }
        for s in &self.services {
            let have = per_service.get(s.name.as_str()).copied().unwrap_or(0);
            if have != s.replica_count {
                v(
                    "pod-count",
                    format!(
                        "service `{}` declares {} replicas but has {} pods",
                        s.name, s.replica_count, have
                    ),
                );
            }
        }

        for e in &self.edges {
            let label = format!("{} -> {} ({})", e.caller, e.callee, e.operation_name);
            if e.caller == e.callee {
                v("edge-self-loop", format!("edge {label} calls itself"));
            }
            for end in [&e.caller, &e.callee] {
                if !names.contains(end.as_str()) {
                    v("edge-endpoint", format!("edge {label} references undeclared service `{end}`"));
                }
            }
            if !(e.base_latency_ms > 0.0 && e.base_latency_ms.is_finite()) {
                v("edge-latency", format!("edge {label} has non-positive base latency"));
            }
        }

        match self.service(&self.entry_service) {
            None => v(
                "entry",
                format!("entry service `{}` is not declared", self.entry_service),
            ),
            Some(entry) => {
                if entry.kind != ServiceKind::Frontend {
                    v("entry", format!("entry service `{}` is not a frontend", entry.name));
                }
                if self.incoming(&entry.name).next().is_some() {
                    v("entry", format!("entry service `{}` has incoming edges", entry.name));
                }
                let reached = self.reachable_from(&entry.name);
                for s in &self.services {
                    if !reached.contains(s.name.as_str()) {
                        v(
                            "reachability",
                            format!("service `{}` is unreachable from `{}`", s.name, entry.name),
                        );
                    }
                }
            }
        }

        if self.has_cycle() {
            v("acyclic", "call graph contains a cycle".into());
        }
        out
    }

    fn reachable_from<'a>(&'a self, start: &'a str) -> BTreeSet<&'a str> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            if !seen.insert(s) {
                continue;
            }
            for e in self.edges.iter().filter(|e| e.caller == s) {
                queue.push_back(e.callee.as_str());
            }
        }
        seen
    }

    // Trace trees are produced by expanding the call graph, which only
    // terminates on a DAG.
    fn has_cycle(&self) -> bool {
        let mut indegree: BTreeMap<&str, usize> =
            self.services.iter().map(|s| (s.name.as_str(), 0)).collect();
        for e in &self.edges {
            if let Some(d) = indegree.get_mut(e.callee.as_str()) {
                *d += 1;
            }
        }
        let mut ready: Vec<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(s, _)| *s)
            .collect();
        let mut visited = 0;
        while let Some(s) = ready.pop() {
            visited += 1;
            for e in self.edges.iter().filter(|e| e.caller == s) {
                if let Some(d) = indegree.get_mut(e.callee.as_str()) {
                    *d -= 1;
                    if *d == 0 {
                        ready.push(e.callee.as_str());
                    }
                }
            }
        }
        visited < indegree.len()
    }

    /// Renders the versioned TOML document accepted by [`load_topology`].
    pub fn to_document(&self) -> String {
        let doc = TopologyDocument {
            version: TOPOLOGY_SCHEMA_VERSION,
            entry: self.entry_service.clone(),
            nodes: self.nodes.clone(),
            services: self.services.clone(),
            edges: self.edges.clone(),
            pods: Some(self.pods.clone()),
        };
        toml::to_string(&doc).expect("topology document always serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDocument {
    version: u32,
    entry: String,
    nodes: Vec<String>,
    services: Vec<Service>,
    #[serde(default)]
    edges: Vec<CallEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pods: Option<Vec<PodInstance>>,
}

/// Parses and validates a topology document.
pub fn load_topology(document: &str) -> Result<ServiceTopology, TopologyError> {
    let doc: TopologyDocument =
        toml::from_str(document).map_err(|e| TopologyError::Parse(e.to_string()))?;
    if doc.version != TOPOLOGY_SCHEMA_VERSION {
        return Err(TopologyError::Parse(format!(
            "unsupported topology version {} (expected {})",
            doc.version, TOPOLOGY_SCHEMA_VERSION
        )));
    }
    ServiceTopology::new(doc.services, doc.nodes, doc.edges, doc.entry, doc.pods)
}

/// Places pods `<service>-0..replicas` on nodes round-robin by global pod index.
fn round_robin_pods(services: &[Service], nodes: &[String]) -> Vec<PodInstance> {
    let mut pods = Vec::new();
    for s in services {
        for i in 0..s.replica_count {
            let node_id = if nodes.is_empty() {
                String::new()
            } else {
                nodes[pods.len() % nodes.len()].clone()
            };
            pods.push(PodInstance {
                cmdb_id: format!("{}-{}", s.name, i),
                service: s.name.clone(),
                node_id,
            });
        }
    }
    pods
}

/// The Online Boutique deployment: 11 services, 31 pods on 8 nodes.
pub fn default_boutique_topology() -> ServiceTopology {
    use ServiceKind::*;
    let svc = |name: &str, kind, replica_count| Service {
        name: name.to_string(),
        kind,
        replica_count,
    };
    let services = vec![
        svc("frontend", Frontend, 3),
        svc("productcatalogservice", Backend, 3),
        svc("cartservice", Backend, 3),
        svc("currencyservice", Backend, 3),
        svc("recommendationservice", Backend, 3),
        svc("shippingservice", Backend, 3),
        svc("checkoutservice", Backend, 3),
        svc("adservice", Backend, 3),
        svc("paymentservice", Backend, 3),
        svc("emailservice", Backend, 3),
        svc("redis-cart", Datastore, 1),
    ];
    let nodes = (0..8).map(|i| format!("node-{i}")).collect();
    let edge = |caller: &str, callee: &str, op: &str, ms: f64| CallEdge {
        caller: caller.to_string(),
        callee: callee.to_string(),
        operation_name: op.to_string(),
        base_latency_ms: ms,
    };
    let edges = vec![
        edge("frontend", "productcatalogservice", "ProductCatalogService/ListProducts", 6.0),
        edge("frontend", "cartservice", "CartService/GetCart", 5.0),
        edge("frontend", "currencyservice", "CurrencyService/Convert", 3.0),
        edge("frontend", "recommendationservice", "RecommendationService/ListRecommendations", 9.0),
        edge("frontend", "shippingservice", "ShippingService/GetQuote", 4.0),
        edge("frontend", "checkoutservice", "CheckoutService/PlaceOrder", 20.0),
        edge("frontend", "adservice", "AdService/GetAds", 4.0),
        edge("checkoutservice", "cartservice", "CartService/EmptyCart", 5.0),
        edge("checkoutservice", "productcatalogservice", "ProductCatalogService/GetProduct", 4.0),
        edge("checkoutservice", "currencyservice", "CurrencyService/Convert", 3.0),
        edge("checkoutservice", "shippingservice", "ShippingService/ShipOrder", 6.0),
        edge("checkoutservice", "paymentservice", "PaymentService/Charge", 8.0),
        edge("checkoutservice", "emailservice", "EmailService/SendOrderConfirmation", 7.0),
        edge("recommendationservice", "productcatalogservice", "ProductCatalogService/ListProducts", 6.0),
        edge("cartservice", "redis-cart", "redis/HGETALL", 1.5),
    ];
    ServiceTopology::new(services, nodes, edges, "frontend", None)
        .expect("built-in topology is valid")
}
