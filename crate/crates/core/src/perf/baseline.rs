use std::collections::HashSet;

use serde::Deserialize;

use crate::numeric::{count_ops, DType};
use crate::oracle::{KernelKind, KernelSpec};

use super::{PerfError, PerfReport, Source, SCHEMA_VERSION};

const SHIPPED: &str = include_str!("../../data/baseline.csv");

#[derive(Deserialize)]
struct CsvRow {
    kernel: KernelKind,
    in_rows: usize,
    in_cols: usize,
    w_rows: usize,
    w_cols: usize,
    dtype_in: DType,
    dtype_w: DType,
    streams: Option<usize>,
    windows: Option<usize>,
    latency: u64,
    latency_tolerance: Option<u64>,
    lower_bound: Option<u64>,
    utilization: Option<f64>,
    throughput: f64,
    area_mm2: Option<f64>,
    power_mw: Option<f64>,
    source: Source,
    multipliers: Option<u32>,
}

/// One published row.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRow {
    pub report: PerfReport,
    /// Half-width of the rounding applied to the published latency
    /// (`1.05M` is any latency within 5000 of 1 050 000).
    pub latency_tolerance: u64,
    /// Whether `report.multipliers` was estimated rather than published.
    pub multipliers_derived: bool,
}

impl BaselineRow {
    pub fn latency_range(&self) -> std::ops::RangeInclusive<u64> {
        let l = self.report.latency_cycles;
        l.saturating_sub(self.latency_tolerance)..=l + self.latency_tolerance
    }
}

/// Spec key with the window override dropped, so rows published under
/// different window conventions still pair up.
pub(crate) fn shape_key(spec: &KernelSpec) -> String {
    KernelSpec { window_count_override: None, ..spec.clone() }.key()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineTable {
    pub rows: Vec<BaselineRow>,
}

impl BaselineTable {
    /// The published tables bundled with the crate.
    pub fn shipped() -> Self {
        Self::from_csv(SHIPPED).expect("bundled baseline parses")
    }

    pub fn from_csv(text: &str) -> Result<Self, PerfError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for rec in reader.deserialize() {
            let row: CsvRow = rec?;
            let mut spec = KernelSpec::matvec(1, 1, row.dtype_in);
            spec.kind = row.kernel;
            spec.input_shape = (row.in_rows, row.in_cols);
            spec.weight_shape = (row.w_rows, row.w_cols);
            spec.dtype_in = row.dtype_in;
            spec.dtype_w = row.dtype_w;
            spec.streams = row.streams.unwrap_or(1);
            spec.window_count_override = row.windows;
            spec.validate()?;
            if !seen.insert((row.source, shape_key(&spec))) {
                return Err(PerfError::Baseline(format!("duplicate row {} in {}", spec.key(), row.source.as_str())));
            }
            let ops = count_ops(&spec)?;
            // The HLS table lists no multiplier counts; estimate the real
            // multiplies issued per cycle, rounded up to a power of two.
            let derived = row.multipliers.is_none() && row.latency > 0;
            let multipliers = row
                .multipliers
                .or_else(|| derived.then(|| (ops.real_mults.div_ceil(row.latency) as u32).next_power_of_two()));
            rows.push(BaselineRow {
                report: PerfReport {
                    schema_version: SCHEMA_VERSION,
                    kernel: spec,
                    source: row.source,
                    latency_cycles: row.latency,
                    lower_bound_cycles: row.lower_bound,
                    utilization_pct: row.utilization,
                    throughput_gops: row.throughput,
                    clock_ghz: 1.0,
                    total_ops: ops.total_ops,
                    area_mm2: row.area_mm2,
                    power_mw: row.power_mw,
                    multipliers,
                    memory_bound_cycles: None,
                },
                latency_tolerance: row.latency_tolerance.unwrap_or(0),
                multipliers_derived: derived,
            });
        }
        Ok(BaselineTable { rows })
    }

    /// Rows from one source, in file order.
    pub fn source(&self, source: Source) -> impl Iterator<Item = &BaselineRow> {
        self.rows.iter().filter(move |r| r.report.source == source)
    }

    /// The row of `source` for the same kernel, shapes and types as `spec`.
    pub fn find(&self, spec: &KernelSpec, source: Source) -> Option<&BaselineRow> {
        let key = shape_key(spec);
        self.source(source).find(|r| shape_key(&r.report.kernel) == key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_has_both_sources() {
        let t = BaselineTable::shipped();
        assert_eq!(t.source(Source::PaperTableI).count(), 20);
        assert_eq!(t.source(Source::PaperTableII).count(), 20);
        let mm = KernelSpec::matmul(1024, 8, 8, DType::Real);
        assert_eq!(t.find(&mm, Source::PaperTableI).unwrap().report.latency_cycles, 1039);
        assert_eq!(t.find(&mm, Source::PaperTableII).unwrap().report.latency_cycles, 4138);
    }

    #[test]
    fn fir_rows_carry_their_window_counts() {
        let t = BaselineTable::shipped();
        let fir = KernelSpec::fir(1024, 32, DType::Complex);
        let row = t.find(&fir, Source::PaperTableI).unwrap();
        assert_eq!(row.report.kernel.window_count(), 447);
        assert_eq!(t.find(&fir, Source::PaperTableII).unwrap().report.kernel.window_count(), 993);
    }

    #[test]
    fn hls_multipliers_are_derived() {
        let t = BaselineTable::shipped();
        let mm = t.find(&KernelSpec::matmul(1024, 4, 8, DType::Real), Source::PaperTableII).unwrap();
        assert!(mm.multipliers_derived);
        assert_eq!(mm.report.multipliers, Some(16));
        let sa = t.find(&KernelSpec::matmul(1024, 4, 8, DType::Real), Source::PaperTableI).unwrap();
        assert!(!sa.multipliers_derived);
        assert_eq!(sa.report.multipliers, Some(64));
    }

    #[test]
    fn rounded_rows_have_a_range() {
        let t = BaselineTable::shipped();
        let op = t.find(&KernelSpec::outer_product(1024, 128, DType::Complex), Source::PaperTableI).unwrap();
        assert!(op.latency_range().contains(&1_048_700));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let head = SHIPPED.lines().next().unwrap();
        let row = SHIPPED.lines().nth(1).unwrap();
        let text = format!("{head}\n{row}\n{row}\n");
        assert!(matches!(BaselineTable::from_csv(&text), Err(PerfError::Baseline(_))));
    }

    #[test]
    fn same_shape_in_both_sources_is_fine() {
        let head = SHIPPED.lines().next().unwrap();
        let a = SHIPPED.lines().nth(1).unwrap();
        let b = a.replace("paper_table_i", "paper_table_ii");
        assert_eq!(BaselineTable::from_csv(&format!("{head}\n{a}\n{b}\n")).unwrap().rows.len(), 2);
    }
}
