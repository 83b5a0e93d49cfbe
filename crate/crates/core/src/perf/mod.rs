//! Analytic metrics, published baseline data and comparison reports.

mod baseline;
mod compare;
mod metrics;
mod report;

use thiserror::Error;

use crate::oracle::SpecError;

pub use baseline::{BaselineRow, BaselineTable};
pub use compare::{compare, normalize, Aggregate, ChartPoint, ComparisonReport, KernelComparison, RadarAxes};
pub use metrics::{lower_bound, memory_bound, throughput, utilization};
pub use report::{PerfReport, Source, SCHEMA_VERSION, SPATIAL_ARRAY_AREA_MM2};

#[derive(Debug, Error)]
pub enum PerfError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("latency {latency} is below the lower bound {lower_bound}")]
    LatencyBelowBound { latency: u64, lower_bound: u64 },
    #[error("invalid metric input: {0}")]
    Invalid(String),
    #[error("baseline: {0}")]
    Baseline(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
