use serde::{Deserialize, Serialize};

use crate::fabric::ArrayConfig;
use crate::numeric::count_ops;
use crate::oracle::KernelSpec;

use super::{lower_bound, memory_bound, throughput, utilization, PerfError};

pub const SCHEMA_VERSION: u32 = 1;

/// Synthesized area of the whole array.
pub const SPATIAL_ARRAY_AREA_MM2: f64 = 1.014;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Simulated,
    /// Published spatial-array measurements.
    PaperTableI,
    /// Published HLS baseline cores.
    #[serde(rename = "paper_table_ii")]
    PaperTableII,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Simulated => "simulated",
            Source::PaperTableI => "paper_table_i",
            Source::PaperTableII => "paper_table_ii",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub schema_version: u32,
    pub kernel: KernelSpec,
    pub source: Source,
    pub latency_cycles: u64,
    /// Absent for rows that publish no bound (the HLS cores).
    pub lower_bound_cycles: Option<u64>,
    pub utilization_pct: Option<f64>,
    pub throughput_gops: f64,
    pub clock_ghz: f64,
    pub total_ops: u64,
    pub area_mm2: Option<f64>,
    pub power_mw: Option<f64>,
    pub multipliers: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_bound_cycles: Option<u64>,
}

impl PerfReport {
    /// Metrics for a simulated run of `spec` that took `latency` cycles.
    pub fn simulated(spec: &KernelSpec, cfg: &ArrayConfig, latency: u64) -> Result<Self, PerfError> {
        let lb = lower_bound(spec, cfg)?;
        let ops = count_ops(spec)?.total_ops;
        Ok(PerfReport {
            schema_version: SCHEMA_VERSION,
            kernel: spec.clone(),
            source: Source::Simulated,
            latency_cycles: latency,
            lower_bound_cycles: Some(lb),
            utilization_pct: Some(utilization(lb, latency)?),
            throughput_gops: throughput(ops, latency, cfg.clock_ghz),
            clock_ghz: cfg.clock_ghz,
            total_ops: ops,
            area_mm2: (cfg.rows == 8 && cfg.cols == 8).then_some(SPATIAL_ARRAY_AREA_MM2),
            power_mw: None,
            multipliers: Some(cfg.pe_count() as u32),
            memory_bound_cycles: Some(memory_bound(spec, cfg)?),
        })
    }

    /// GOPS per mm², when the area is known.
    pub fn perf_per_area(&self) -> Option<f64> {
        self.area_mm2.filter(|a| *a > 0.0).map(|a| self.throughput_gops / a)
    }

    /// GOPS per mW, when the power is known.
    pub fn perf_per_power(&self) -> Option<f64> {
        self.power_mw.filter(|p| *p > 0.0).map(|p| self.throughput_gops / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::DType;

    #[test]
    fn simulated_report_identities() {
        let cfg = ArrayConfig::default();
        let r = PerfReport::simulated(&KernelSpec::vecmagsq(512, DType::Complex), &cfg, 64).unwrap();
        assert_eq!(r.lower_bound_cycles, Some(32));
        assert_eq!(r.utilization_pct, Some(50.0));
        assert_eq!(r.throughput_gops, 64.0);
        assert_eq!(r.area_mm2, Some(SPATIAL_ARRAY_AREA_MM2));
    }

    #[test]
    fn latency_under_bound_is_an_error() {
        let cfg = ArrayConfig::default();
        let err = PerfReport::simulated(&KernelSpec::vecmagsq(512, DType::Complex), &cfg, 31).unwrap_err();
        assert!(matches!(err, PerfError::LatencyBelowBound { .. }));
    }

    #[test]
    fn json_round_trip() {
        let cfg = ArrayConfig::default();
        let r = PerfReport::simulated(&KernelSpec::matched_filter(64, 8, 2), &cfg, 500).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"source\":\"simulated\""));
        assert!(s.contains("\"kind\":\"matched_filter\""));
        assert_eq!(serde_json::from_str::<PerfReport>(&s).unwrap(), r);
    }
}
