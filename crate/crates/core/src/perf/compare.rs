use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::oracle::KernelKind;

use super::baseline::shape_key;
use super::{BaselineTable, PerfError, PerfReport, Source, SCHEMA_VERSION, SPATIAL_ARRAY_AREA_MM2};

/// Metrics scaled by the per-kernel maximum of the two designs. Latency
/// and inverse throughput are lower-is-better like area and power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarAxes {
    pub latency: f64,
    pub inverse_throughput: f64,
    pub area: f64,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelComparison {
    pub kernel: String,
    pub kind: KernelKind,
    pub source: Source,
    pub latency_cycles: u64,
    pub throughput_gops: f64,
    pub table_i_latency: Option<u64>,
    pub latency_delta: Option<i64>,
    pub latency_delta_pct: Option<f64>,
    pub table_i_throughput: Option<f64>,
    pub throughput_delta: Option<f64>,
    pub throughput_delta_pct: Option<f64>,
    pub hls_latency: Option<u64>,
    pub hls_over_sa_latency: Option<f64>,
    pub sa_over_hls_power: Option<f64>,
    pub sa_radar: Option<RadarAxes>,
    pub hls_radar: Option<RadarAxes>,
}

/// A single unit covering every compared kernel. The HLS side needs one
/// core per kernel (sized for its largest compared configuration); the
/// array is one piece of hardware.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub kernels: Vec<KernelKind>,
    pub hls_area_mm2: f64,
    pub hls_power_mw: f64,
    pub hls_multipliers: u32,
    pub sa_area_mm2: f64,
    pub sa_power_mw: f64,
    pub sa_multipliers: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub kernel: String,
    pub metric: String,
    pub series: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub comparisons: Vec<KernelComparison>,
    pub aggregate: Option<Aggregate>,
    pub charts: Vec<ChartPoint>,
    pub warnings: Vec<String>,
}

/// Divides every value by the largest; all-zero input is returned as is.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| v / max).collect()
}

fn pct(delta: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * delta / base)
}

struct Side {
    latency: f64,
    throughput: f64,
    area: Option<f64>,
    power: Option<f64>,
    multipliers: Option<u32>,
}

fn radar(sa: &Side, hls: &Side) -> Option<(RadarAxes, RadarAxes)> {
    if sa.throughput <= 0.0 || hls.throughput <= 0.0 {
        return None;
    }
    let axes = [
        [sa.latency, hls.latency],
        [1.0 / sa.throughput, 1.0 / hls.throughput],
        [sa.area?, hls.area?],
        [sa.power?, hls.power?],
    ]
    .map(|pair| normalize(&pair));
    let side = |i: usize| RadarAxes { latency: axes[0][i], inverse_throughput: axes[1][i], area: axes[2][i], power: axes[3][i] };
    Some((side(0), side(1)))
}

fn push_bars(charts: &mut Vec<ChartPoint>, kernel: &str, series: &str, s: &Side) {
    let mut bar = |metric: &str, value: Option<f64>| {
        if let Some(value) = value {
            charts.push(ChartPoint { kernel: kernel.into(), metric: metric.into(), series: series.into(), value });
        }
    };
    bar("multipliers", s.multipliers.map(f64::from));
    bar("area", s.area);
    bar("power", s.power);
    bar("latency", Some(s.latency));
    bar("throughput", Some(s.throughput));
    bar("perf_per_area", s.area.filter(|a| *a > 0.0).map(|a| s.throughput / a));
    bar("perf_per_power", s.power.filter(|p| *p > 0.0).map(|p| s.throughput / p));
}

const SA: &str = "spatial_array";
const HLS: &str = "hls";

/// Compares spatial-array reports (simulated or published) with the
/// published array figures and the HLS baseline. Reports without a
/// matching baseline row are kept and noted in `warnings`.
pub fn compare(reports: &[PerfReport], baseline: &BaselineTable) -> ComparisonReport {
    let mut comparisons = Vec::new();
    let mut charts = Vec::new();
    let mut warnings = Vec::new();
    // Per kernel kind: (area, power, multipliers) of the largest HLS core.
    let mut hls_cores: BTreeMap<KernelKind, (f64, f64, u32)> = BTreeMap::new();
    let mut sa_power: Option<f64> = None;
    let mut seen = std::collections::HashSet::new();

    for rep in reports {
        let key = shape_key(&rep.kernel);
        if !seen.insert((key.clone(), rep.source)) {
            warnings.push(format!("{key}: duplicate {} report ignored", rep.source.as_str()));
            continue;
        }
        if rep.source == Source::PaperTableII {
            warnings.push(format!("{key}: HLS rows are baseline data, not array reports"));
            continue;
        }
        let table_i = baseline.find(&rep.kernel, Source::PaperTableI).map(|r| &r.report);
        let hls = baseline.find(&rep.kernel, Source::PaperTableII).map(|r| &r.report);
        if table_i.is_none() {
            warnings.push(format!("{key}: no published array row"));
        }
        if hls.is_none() {
            warnings.push(format!("{key}: no HLS baseline row"));
        }
        let sa = Side {
            latency: rep.latency_cycles as f64,
            throughput: rep.throughput_gops,
            area: rep.area_mm2.or(table_i.and_then(|t| t.area_mm2)),
            power: rep.power_mw.or(table_i.and_then(|t| t.power_mw)),
            multipliers: rep.multipliers.or(table_i.and_then(|t| t.multipliers)),
        };
        push_bars(&mut charts, &key, SA, &sa);
        if let Some(p) = sa.power {
            sa_power = Some(sa_power.map_or(p, |q: f64| q.max(p)));
        }

        let mut cmp = KernelComparison {
            kernel: key.clone(),
            kind: rep.kernel.kind,
            source: rep.source,
            latency_cycles: rep.latency_cycles,
            throughput_gops: rep.throughput_gops,
            table_i_latency: None,
            latency_delta: None,
            latency_delta_pct: None,
            table_i_throughput: None,
            throughput_delta: None,
            throughput_delta_pct: None,
            hls_latency: None,
            hls_over_sa_latency: None,
            sa_over_hls_power: None,
            sa_radar: None,
            hls_radar: None,
        };
        if let Some(t) = table_i {
            let dl = rep.latency_cycles as i64 - t.latency_cycles as i64;
            let dt = rep.throughput_gops - t.throughput_gops;
            cmp.table_i_latency = Some(t.latency_cycles);
            cmp.latency_delta = Some(dl);
            cmp.latency_delta_pct = pct(dl as f64, t.latency_cycles as f64);
            cmp.table_i_throughput = Some(t.throughput_gops);
            cmp.throughput_delta = Some(dt);
            cmp.throughput_delta_pct = pct(dt, t.throughput_gops);
        }
        if let Some(h) = hls {
            let hs = Side {
                latency: h.latency_cycles as f64,
                throughput: h.throughput_gops,
                area: h.area_mm2,
                power: h.power_mw,
                multipliers: h.multipliers,
            };
            push_bars(&mut charts, &key, HLS, &hs);
            cmp.hls_latency = Some(h.latency_cycles);
            cmp.hls_over_sa_latency = (rep.latency_cycles > 0).then(|| hs.latency / sa.latency);
            cmp.sa_over_hls_power = sa.power.zip(hs.power).filter(|(_, h)| *h > 0.0).map(|(s, h)| s / h);
            if let Some((a, b)) = radar(&sa, &hs) {
                for (series, axes) in [(SA, a), (HLS, b)] {
                    for (metric, value) in [
                        ("radar_latency", axes.latency),
                        ("radar_inverse_throughput", axes.inverse_throughput),
                        ("radar_area", axes.area),
                        ("radar_power", axes.power),
                    ] {
                        charts.push(ChartPoint { kernel: key.clone(), metric: metric.into(), series: series.into(), value });
                    }
                }
                cmp.sa_radar = Some(a);
                cmp.hls_radar = Some(b);
            }
            let core = hls_cores.entry(rep.kernel.kind).or_insert((0.0, 0.0, 0));
            core.0 = core.0.max(h.area_mm2.unwrap_or(0.0));
            core.1 = core.1.max(h.power_mw.unwrap_or(0.0));
            core.2 = core.2.max(h.multipliers.unwrap_or(0));
        }
        comparisons.push(cmp);
    }

    let aggregate = (!hls_cores.is_empty()).then(|| Aggregate {
        kernels: hls_cores.keys().copied().collect(),
        hls_area_mm2: hls_cores.values().map(|c| c.0).sum(),
        hls_power_mw: hls_cores.values().map(|c| c.1).sum(),
        hls_multipliers: hls_cores.values().map(|c| c.2).sum(),
        sa_area_mm2: SPATIAL_ARRAY_AREA_MM2,
        sa_power_mw: sa_power.unwrap_or(0.0),
        sa_multipliers: 64,
    });
    if let Some(agg) = &aggregate {
        for (metric, sa, hls) in [
            ("multipliers", agg.sa_multipliers as f64, agg.hls_multipliers as f64),
            ("area", agg.sa_area_mm2, agg.hls_area_mm2),
            ("power", agg.sa_power_mw, agg.hls_power_mw),
        ] {
            for (series, value) in [(SA, sa), (HLS, hls)] {
                charts.push(ChartPoint { kernel: "All".into(), metric: metric.into(), series: series.into(), value });
            }
        }
    }
    ComparisonReport { schema_version: SCHEMA_VERSION, comparisons, aggregate, charts, warnings }
}

#[derive(Serialize)]
struct CsvLine<'a> {
    kernel: &'a str,
    source: &'static str,
    latency_cycles: u64,
    throughput_gops: f64,
    table_i_latency: Option<u64>,
    latency_delta: Option<i64>,
    latency_delta_pct: Option<f64>,
    table_i_throughput: Option<f64>,
    throughput_delta: Option<f64>,
    throughput_delta_pct: Option<f64>,
    hls_latency: Option<u64>,
    hls_over_sa_latency: Option<f64>,
    sa_over_hls_power: Option<f64>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String, PerfError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One line per compared kernel; radar values live in the chart data.
    pub fn to_csv(&self) -> Result<String, PerfError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.comparisons {
            w.serialize(CsvLine {
                kernel: &c.kernel,
                source: c.source.as_str(),
                latency_cycles: c.latency_cycles,
                throughput_gops: c.throughput_gops,
                table_i_latency: c.table_i_latency,
                latency_delta: c.latency_delta,
                latency_delta_pct: c.latency_delta_pct,
                table_i_throughput: c.table_i_throughput,
                throughput_delta: c.throughput_delta,
                throughput_delta_pct: c.throughput_delta_pct,
                hls_latency: c.hls_latency,
                hls_over_sa_latency: c.hls_over_sa_latency,
                sa_over_hls_power: c.sa_over_hls_power,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| PerfError::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    pub fn charts_json(&self) -> Result<String, PerfError> {
        Ok(serde_json::to_string_pretty(&self.charts)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::ArrayConfig;
    use crate::numeric::DType;
    use crate::oracle::KernelSpec;
    use proptest::prelude::*;

    fn table_i_reports(t: &BaselineTable) -> Vec<PerfReport> {
        t.source(Source::PaperTableI).map(|r| r.report.clone()).collect()
    }

    #[test]
    fn published_ratios() {
        let t = BaselineTable::shipped();
        let rep = compare(&table_i_reports(&t), &t);
        assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
        let mm = rep.comparisons.iter().find(|c| c.kernel == KernelSpec::matmul(1024, 8, 8, DType::Real).key()).unwrap();
        assert!((mm.hls_over_sa_latency.unwrap() - 3.98).abs() < 0.01);
        let sq = rep.comparisons.iter().find(|c| c.kernel == KernelSpec::vecmagsq(512, DType::Complex).key()).unwrap();
        assert!((sq.sa_over_hls_power.unwrap() - 1.74).abs() < 0.01);
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let t = BaselineTable::shipped();
        let rep = compare(&table_i_reports(&t), &t);
        for c in &rep.comparisons {
            assert_eq!(c.latency_delta, Some(0));
            assert_eq!(c.throughput_delta, Some(0.0));
        }
    }

    #[test]
    fn aggregate_sums_one_core_per_kernel() {
        let t = BaselineTable::shipped();
        let rep = compare(&table_i_reports(&t), &t);
        let agg = rep.aggregate.unwrap();
        assert_eq!(agg.kernels.len(), 6);
        assert_eq!(agg.sa_area_mm2, SPATIAL_ARRAY_AREA_MM2);
        // matvec .4637 + matmul .4054 + fir .4641 + mf .4641 + magsq .1164 + outer .3296
        assert!((agg.hls_area_mm2 - 2.2433).abs() < 1e-9);
        assert!(rep.charts.iter().any(|c| c.kernel == "All" && c.metric == "area"));
    }

    #[test]
    fn missing_baseline_is_a_warning() {
        let t = BaselineTable::shipped();
        let sim = PerfReport::simulated(&KernelSpec::matmul(10, 3, 4, DType::Real), &ArrayConfig::default(), 20).unwrap();
        let rep = compare(&[sim], &t);
        assert_eq!(rep.comparisons.len(), 1);
        assert_eq!(rep.warnings.len(), 2);
        assert!(rep.aggregate.is_none());
        assert!(rep.charts.iter().any(|c| c.series == SA && c.metric == "latency"));
    }

    #[test]
    fn radar_axes_top_out_at_one() {
        let t = BaselineTable::shipped();
        let rep = compare(&table_i_reports(&t), &t);
        for c in &rep.comparisons {
            let (a, b) = (c.sa_radar.unwrap(), c.hls_radar.unwrap());
            for (x, y) in [(a.latency, b.latency), (a.inverse_throughput, b.inverse_throughput), (a.area, b.area), (a.power, b.power)] {
                assert_eq!(x.max(y), 1.0);
            }
        }
    }

    #[test]
    fn csv_and_json_render() {
        let t = BaselineTable::shipped();
        let rep = compare(&table_i_reports(&t), &t);
        let csv = rep.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 21);
        assert!(csv.starts_with("kernel,source,latency_cycles"));
        let back: ComparisonReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back.comparisons.len(), rep.comparisons.len());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in proptest::collection::vec(0.0f64..1e6, 1..8)) {
            let once = normalize(&v);
            prop_assert_eq!(normalize(&once), once);
        }
    }
}
