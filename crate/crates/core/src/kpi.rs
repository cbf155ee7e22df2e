//! KPI catalog: 17 container-level and 10 service-level indicators with their
//! baseline models.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

pub const CONTAINER_KPI_COUNT: usize = 17;
pub const SERVICE_KPI_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KpiLevel {
    Container,
    Service,
}

/// Baseline model for one KPI: `mean + N(0, stddev)` clamped to `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSpec {
    pub name: String,
    pub unit: String,
    pub mean: f64,
    pub stddev: f64,
    #[serde(default)]
    pub min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl KpiSpec {
    pub fn clamp(&self, v: f64) -> f64 {
        let v = v.max(self.min);
        match self.max {
            Some(hi) => v.min(hi),
            None => v,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KpiError {
    #[error("unknown kpi `{0}`")]
    UnknownKpi(String),
    #[error("kpi catalog must have {expected} {level} entries, found {found}")]
    WrongCount {
        level: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("kpi `{0}` declared twice")]
    Duplicate(String),
    #[error("kpi catalog does not parse: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiCatalog {
    container_kpis: Vec<KpiSpec>,
    service_kpis: Vec<KpiSpec>,
}

impl KpiCatalog {
    pub fn new(container_kpis: Vec<KpiSpec>, service_kpis: Vec<KpiSpec>) -> Result<Self, KpiError> {
        if container_kpis.len() != CONTAINER_KPI_COUNT {
            return Err(KpiError::WrongCount {
                level: "container",
                expected: CONTAINER_KPI_COUNT,
                found: container_kpis.len(),
            });
        }
        if service_kpis.len() != SERVICE_KPI_COUNT {
            return Err(KpiError::WrongCount {
                level: "service",
                expected: SERVICE_KPI_COUNT,
                found: service_kpis.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for k in container_kpis.iter().chain(&service_kpis) {
            if !seen.insert(k.name.as_str()) {
                return Err(KpiError::Duplicate(k.name.clone()));
            }
        }
        Ok(Self { container_kpis, service_kpis })
    }

    /// Loads a catalog override (TOML with `[[container_kpis]]` and
    /// `[[service_kpis]]` tables).
    pub fn from_toml(document: &str) -> Result<Self, KpiError> {
        let raw: KpiCatalog = toml::from_str(document).map_err(|e| KpiError::Parse(e.to_string()))?;
        Self::new(raw.container_kpis, raw.service_kpis)
    }

    pub fn container_kpis(&self) -> &[KpiSpec] {
        &self.container_kpis
    }

    pub fn service_kpis(&self) -> &[KpiSpec] {
        &self.service_kpis
    }

    pub fn get(&self, name: &str) -> Option<(KpiLevel, &KpiSpec)> {
        self.container_kpis
            .iter()
            .find(|k| k.name == name)
            .map(|k| (KpiLevel::Container, k))
            .or_else(|| {
                self.service_kpis
                    .iter()
                    .find(|k| k.name == name)
                    .map(|k| (KpiLevel::Service, k))
            })
    }

    pub fn layout(&self) -> KpiLayout {
        KpiLayout {
            container: self.container_kpis.iter().map(|k| k.name.clone()).collect(),
            service: self.service_kpis.iter().map(|k| k.name.clone()).collect(),
        }
    }

    /// Baseline value of `kpi` for `entity` at tick number `tick`.
    ///
    /// Each `(kpi, entity)` pair owns its own random stream, and the tick
    /// selects the draw inside it, so the value is a pure function of its
    /// arguments.
    pub fn baseline_sample(&self, kpi: &str, entity: &str, tick: u64, seed: u64) -> Result<f64, KpiError> {
        let (_, spec) = self.get(kpi).ok_or_else(|| KpiError::UnknownKpi(kpi.to_string()))?;
        Ok(sample_spec(spec, entity, tick, seed))
    }
}

pub(crate) fn sample_spec(spec: &KpiSpec, entity: &str, tick: u64, seed: u64) -> f64 {
    if spec.stddev == 0.0 {
        return spec.clamp(spec.mean);
    }
    let mut rng = SimRng::stream(seed, &spec.name, entity).at(tick);
    spec.clamp(rng.normal(spec.mean, spec.stddev))
}

/// Names of the KPIs in a batch, split by level; drives the per-KPI CSV files.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KpiLayout {
    pub container: Vec<String>,
    pub service: Vec<String>,
}

impl KpiLayout {
    pub fn contains(&self, name: &str) -> bool {
        self.container.iter().chain(&self.service).any(|k| k == name)
    }
}

impl Default for KpiCatalog {
    fn default() -> Self {
        let k = |name: &str, unit: &str, mean: f64, stddev: f64, max: Option<f64>| KpiSpec {
            name: name.to_string(),
            unit: unit.to_string(),
            mean,
            stddev,
            min: 0.0,
            max,
        };
        let container = vec![
            k("cpu_usage_pct", "percent", 25.0, 4.0, Some(100.0)),
            k("cpu_throttled_s", "seconds", 0.02, 0.01, None),
            k("mem_usage_bytes", "bytes", 268_435_456.0, 8_388_608.0, None),
            k("mem_working_set", "bytes", 201_326_592.0, 6_291_456.0, None),
            k("mem_fail_cnt", "count", 0.0, 0.0, None),
            k("net_tx_bytes", "bytes", 524_288.0, 65_536.0, None),
            k("net_rx_bytes", "bytes", 524_288.0, 65_536.0, None),
            k("net_tx_packets", "count", 900.0, 60.0, None),
            k("net_rx_packets", "count", 900.0, 60.0, None),
            k("net_drop_tx", "count", 0.5, 0.5, None),
            k("net_drop_rx", "count", 0.5, 0.5, None),
            k("fs_reads", "count", 40.0, 6.0, None),
            k("fs_writes", "count", 25.0, 4.0, None),
            k("fs_read_bytes", "bytes", 163_840.0, 16_384.0, None),
            k("fs_write_bytes", "bytes", 102_400.0, 12_288.0, None),
            k("threads", "count", 24.0, 1.0, None),
            k("restarts", "count", 0.0, 0.0, None),
        ];
        let service = vec![
            k("request_rate", "requests/s", 12.0, 1.5, None),
            k("error_rate", "ratio", 0.002, 0.001, Some(1.0)),
            k("p50_latency", "ms", 8.0, 0.8, None),
            k("p90_latency", "ms", 18.0, 1.8, None),
            k("p99_latency", "ms", 35.0, 3.5, None),
            k("request_size", "bytes", 1_024.0, 96.0, None),
            k("response_size", "bytes", 4_096.0, 384.0, None),
            k("success_rate", "ratio", 0.998, 0.001, Some(1.0)),
            k("active_connections", "count", 16.0, 2.0, None),
            k("retry_rate", "ratio", 0.001, 0.0005, Some(1.0)),
        ];
        Self::new(container, service).expect("built-in catalog is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_shape() {
        let c = KpiCatalog::default();
        assert_eq!(c.container_kpis().len(), 17);
        assert_eq!(c.service_kpis().len(), 10);
        assert_eq!(c.layout().container.len() + c.layout().service.len(), 27);
    }

    #[test]
    fn zero_stddev_gives_mean() {
        let mut c = KpiCatalog::default();
        c.container_kpis[0].stddev = 0.0;
        for tick in 0..50 {
            assert_eq!(c.baseline_sample("cpu_usage_pct", "frontend-0", tick, 9).unwrap(), 25.0);
        }
    }

    #[test]
    fn utilization_is_clamped() {
        let mut c = KpiCatalog::default();
        c.container_kpis[0].mean = 99.0;
        c.container_kpis[0].stddev = 50.0;
        let mut above_mean = 0;
        for tick in 0..500 {
            let v = c.baseline_sample("cpu_usage_pct", "cartservice-1", tick, 1).unwrap();
            assert!((0.0..=100.0).contains(&v), "{v}");
            if v == 100.0 {
                above_mean += 1;
            }
        }
        assert!(above_mean > 0, "large draws should hit the clamp");
    }

    #[test]
    fn entities_draw_from_independent_streams() {
        let c = KpiCatalog::default();
        for tick in 0..200 {
            let a = c.baseline_sample("cpu_usage_pct", "frontend-0", tick, 42).unwrap();
            let b = c.baseline_sample("cpu_usage_pct", "frontend-1", tick, 42).unwrap();
            assert_ne!(a, b, "tick {tick}");
        }
    }

    #[test]
    fn unknown_kpi() {
        let c = KpiCatalog::default();
        assert_eq!(
            c.baseline_sample("nope", "x", 0, 0),
            Err(KpiError::UnknownKpi("nope".into()))
        );
    }

    #[test]
    fn catalog_counts_are_enforced() {
        let c = KpiCatalog::default();
        let err = KpiCatalog::new(c.container_kpis()[..16].to_vec(), c.service_kpis().to_vec()).unwrap_err();
        assert!(matches!(err, KpiError::WrongCount { found: 16, .. }));
        let mut dup = c.service_kpis().to_vec();
        dup[1].name = dup[0].name.clone();
        assert!(matches!(
            KpiCatalog::new(c.container_kpis().to_vec(), dup),
            Err(KpiError::Duplicate(_))
        ));
    }

    #[test]
    fn toml_override_round_trip() {
        let c = KpiCatalog::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(KpiCatalog::from_toml(&text).unwrap(), c);
    }
}
