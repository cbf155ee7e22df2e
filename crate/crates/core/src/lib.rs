//! Core of the servo evaluation framework: the simulated microservice
//! topology, workload and fault simulation, telemetry formats, and the
//! evaluation metrics used to score algorithm plugins.
//!
//! The usual flow is
//!
//! 1. build or load a [`topology::ServiceTopology`];
//! 2. schedule faults on a [`faults::FaultCalendar`];
//! 3. run [`workload::run_simulation`] to obtain a [`telemetry::TelemetryBatch`];
//! 4. export it with [`csv_io::export_csv`], slice it for experiments, and
//!    score plugin payloads with [`scoring::evaluate`].

pub mod csv_io;
pub mod effects;
pub mod faults;
pub mod kpi;
pub mod metrics;
pub mod payload;
pub mod rng;
pub mod scoring;
pub mod telemetry;
pub mod topology;
pub mod truth;
pub mod workload;

pub use faults::{FaultBehavior, FaultCalendar, FaultDefinition, FaultType, InjectionMode, ManifestationMatrix};
pub use metrics::{MetricKind, MetricValue, Prf1, TaskType};
pub use telemetry::{DatasetWindow, Modality, TelemetryBatch, TelemetrySource};
pub use topology::{default_boutique_topology, load_topology, ServiceTopology};
pub use workload::{run_simulation, SimClock, WorkloadProfile};
