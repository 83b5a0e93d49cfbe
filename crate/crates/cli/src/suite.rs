//! Acceptance criteria, shared by `sa-sim validate` and the acceptance test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sa_core::fabric::{simulate_weight_load, weight_load_latency, ArrayConfig};
use sa_core::numeric::{count_ops, DType};
use sa_core::oracle::{KernelKind, KernelSpec};
use sa_core::perf::{compare, lower_bound, throughput, utilization, BaselineRow, BaselineTable, Source, SPATIAL_ARRAY_AREA_MM2};

use crate::pipeline::{render_outputs, run_spec, Format, RunError, LATENCY_BAND};

/// Published rows whose simulation runs to millions of cycles.
const SIM_LATENCY_LIMIT: u64 = 300_000;

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub cfg: ArrayConfig,
    pub seed: u64,
    /// Random specs per kernel for the oracle criterion.
    pub samples: usize,
    /// Restrict everything to these kernels.
    pub kinds: Option<Vec<KernelKind>>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { cfg: ArrayConfig::default(), seed: 2024, samples: 50, kinds: None }
    }
}

impl SuiteOptions {
    fn wants(&self, kind: KernelKind) -> bool {
        self.kinds.as_ref().is_none_or(|k| k.contains(&kind))
    }
}

#[derive(Clone, Debug)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
    pub failures: Vec<String>,
}

impl Criterion {
    fn new(id: u8, name: &'static str, summary: String, failures: Vec<String>) -> Self {
        Criterion { id, name, passed: failures.is_empty(), summary, failures }
    }

    pub fn line(&self) -> String {
        format!("{} criterion {}: {} ({})", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.summary)
    }
}

/// Outcome of one published array row.
#[derive(Clone, Debug)]
pub struct RowOutcome {
    pub key: String,
    pub kind: KernelKind,
    pub lower_bound: Result<u64, String>,
    pub table_lower_bound: Option<u64>,
    pub table_latency: u64,
    /// Error for a failed run; `None` when the row was not simulated.
    pub simulated: Option<Result<u64, String>>,
    pub traced: bool,
}

impl RowOutcome {
    pub fn band_ok(&self) -> Option<bool> {
        let Some(Ok(lat)) = &self.simulated else { return self.simulated.as_ref().map(|_| false) };
        if self.kind == KernelKind::Fir {
            return None;
        }
        let rel = (*lat as f64 - self.table_latency as f64).abs() / self.table_latency as f64;
        Some(rel <= LATENCY_BAND)
    }

    pub fn line(&self) -> String {
        let lb = match (&self.lower_bound, self.table_lower_bound) {
            (Ok(l), Some(t)) if *l == t => format!("lb {l}"),
            (Ok(l), t) => format!("lb {l} (table {t:?})"),
            (Err(e), _) => format!("lb error {e}"),
        };
        let sim = match &self.simulated {
            None => "not simulated".to_string(),
            Some(Ok(l)) => format!("sim {l} vs {}", self.table_latency),
            Some(Err(e)) => format!("run failed: {e}"),
        };
        let ok = self.lower_bound.as_ref().ok() == self.table_lower_bound.as_ref() && self.band_ok() != Some(false)
            && !matches!(self.simulated, Some(Err(_)));
        format!("{} {}: {lb}, {sim}", if ok { "PASS" } else { "FAIL" }, self.key)
    }
}

/// Everything the criteria need, computed once.
pub struct SuiteRun {
    pub rows: Vec<RowOutcome>,
    pub random: Vec<(KernelSpec, Result<u64, String>, bool)>,
    pub criteria: Vec<Criterion>,
}

impl SuiteRun {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

fn table_i(opts: &SuiteOptions, baseline: &BaselineTable) -> Vec<BaselineRow> {
    baseline.source(Source::PaperTableI).filter(|r| opts.wants(r.report.kernel.kind)).cloned().collect()
}

/// A random valid spec of `kind`; shapes stay within 1024 x 16.
pub fn random_spec(kind: KernelKind, rng: &mut ChaCha8Rng) -> KernelSpec {
    let dt = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { DType::Complex } else { DType::Real };
    loop {
        let len = rng.gen_range(1..=1024usize);
        let spec = match kind {
            KernelKind::MatVec => KernelSpec::matvec(len, rng.gen_range(1..=16), dt(rng)),
            KernelKind::MatMul => {
                let s = KernelSpec::matmul(len, rng.gen_range(1..=16), rng.gen_range(1..=16), dt(rng));
                if rng.gen_bool(0.2) {
                    let (a, b) = (dt(rng), dt(rng));
                    s.with_dtypes(a, b)
                } else {
                    s
                }
            }
            KernelKind::Conv1D => KernelSpec::conv1d(len, rng.gen_range(1..=16), rng.gen_range(1..=4), rng.gen_range(1..=3), dt(rng)),
            KernelKind::Fir => {
                let s = KernelSpec::fir(len, rng.gen_range(1..=32), dt(rng));
                let natural = s.natural_window_count();
                if natural > 1 && rng.gen_bool(0.2) {
                    let w = rng.gen_range(1..=natural);
                    s.with_windows(w)
                } else {
                    s
                }
            }
            KernelKind::MatchedFilter => KernelSpec::matched_filter(len, rng.gen_range(1..=32), rng.gen_range(1..=3)),
            KernelKind::VecMagSq => KernelSpec::vecmagsq(len, dt(rng)),
            KernelKind::OuterProduct => KernelSpec::outer_product(len, rng.gen_range(1..=16), dt(rng)),
            KernelKind::TriSolve => KernelSpec::trisolve(rng.gen_range(1..=64)),
            KernelKind::Cholesky => KernelSpec::cholesky(rng.gen_range(1..=64)),
        };
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

fn run_rows(opts: &SuiteOptions, rows: &[BaselineRow], trace_every: usize, offset: usize) -> Vec<RowOutcome> {
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let spec = &row.report.kernel;
            let simulate = row.report.latency_cycles <= SIM_LATENCY_LIMIT;
            let traced = simulate && (offset + i) % trace_every == 0;
            let simulated = simulate.then(|| {
                run_spec(spec, &opts.cfg, opts.seed, traced).map(|o| o.sim.latency_cycles).map_err(|e| e.to_string())
            });
            RowOutcome {
                key: spec.key(),
                kind: spec.kind,
                lower_bound: lower_bound(spec, &opts.cfg).map_err(|e| e.to_string()),
                table_lower_bound: row.report.lower_bound_cycles,
                table_latency: row.report.latency_cycles,
                simulated,
                traced,
            }
        })
        .collect()
}

fn criterion_oracle(opts: &SuiteOptions, random: &[(KernelSpec, Result<u64, String>, bool)]) -> Criterion {
    let failures: Vec<String> = random.iter().filter_map(|(s, r, _)| r.as_ref().err().map(|e| format!("{}: {e}", s.key()))).collect();
    let kinds = KernelKind::ALL.iter().filter(|k| opts.wants(**k)).count();
    Criterion::new(
        1,
        "oracle equivalence on random specs",
        format!("{} of {} runs over {kinds} kernels match", random.len() - failures.len(), random.len()),
        failures,
    )
}

fn criterion_lower_bounds(rows: &[RowOutcome]) -> Criterion {
    let mut failures = Vec::new();
    let mut conditional = 0;
    for r in rows {
        match (&r.lower_bound, r.table_lower_bound) {
            (Ok(l), Some(t)) if *l == t => conditional += (r.kind == KernelKind::Fir) as usize,
            (l, t) => failures.push(format!("{}: {l:?} vs table {t:?}", r.key)),
        }
    }
    Criterion::new(
        2,
        "lower bounds match the table",
        format!("{} rows, {conditional} conditional on the table's window counts", rows.len()),
        failures,
    )
}

fn criterion_identities(rows: &[BaselineRow]) -> Criterion {
    let mut failures = Vec::new();
    for row in rows {
        let r = &row.report;
        let key = r.kernel.key();
        let (Some(lb), Some(util)) = (r.lower_bound_cycles, r.utilization_pct) else {
            failures.push(format!("{key}: row lacks a bound or utilization"));
            continue;
        };
        let ops = match count_ops(&r.kernel) {
            Ok(o) => o.total_ops,
            Err(e) => {
                failures.push(format!("{key}: {e}"));
                continue;
            }
        };
        // Rounded latencies pass if some latency they could stand for does.
        let fits = |lat: u64| {
            let u = utilization(lb, lat).map(|u| (u - util).abs() <= 0.3).unwrap_or(false);
            u && (throughput(ops, lat, r.clock_ghz) - r.throughput_gops).abs() <= 0.05
        };
        if !row.latency_range().any(fits) {
            let u = utilization(lb, r.latency_cycles).unwrap_or(f64::NAN);
            let t = throughput(ops, r.latency_cycles, r.clock_ghz);
            failures.push(format!("{key}: {u:.2}% / {t:.2} GOPS vs {util}% / {}", r.throughput_gops));
        }
    }
    let rounded = rows.iter().filter(|r| r.latency_tolerance > 0).count();
    Criterion::new(3, "metric identities reproduce the table", format!("{} rows, {rounded} with rounded latency", rows.len()), failures)
}

fn criterion_bands(rows: &[RowOutcome], random: &[(KernelSpec, Result<u64, String>, bool)]) -> Criterion {
    let mut failures = Vec::new();
    let mut banded = 0;
    let mut skipped = Vec::new();
    for r in rows {
        match (&r.simulated, r.band_ok()) {
            (None, _) => skipped.push(r.key.clone()),
            (Some(Err(e)), _) => failures.push(format!("{}: {e}", r.key)),
            (Some(Ok(l)), Some(false)) => failures.push(format!("{}: {l} outside the band around {}", r.key, r.table_latency)),
            (Some(Ok(_)), Some(true)) => banded += 1,
            (Some(Ok(_)), None) => {}
        }
    }
    // Runs that finish below the bound fail inside the pipeline.
    let below = random.iter().filter(|(_, r, _)| r.as_ref().is_err_and(|e| e.contains("below the lower bound"))).count();
    if below > 0 {
        failures.push(format!("{below} random runs finished below the lower bound"));
    }
    Criterion::new(
        4,
        "simulated latency within the band",
        format!("{banded} rows in band, {} not simulated, latency >= bound on every run", skipped.len()),
        failures,
    )
}

fn criterion_resources(rows: &[RowOutcome], random: &[(KernelSpec, Result<u64, String>, bool)]) -> Criterion {
    let mut failures: Vec<String> = random
        .iter()
        .filter_map(|(s, r, _)| r.as_ref().err().filter(|e| e.starts_with("resource")).map(|e| format!("{}: {e}", s.key())))
        .collect();
    failures.extend(rows.iter().filter_map(|r| match &r.simulated {
        Some(Err(e)) if e.starts_with("resource") => Some(format!("{}: {e}", r.key)),
        _ => None,
    }));
    let runs = random.len() + rows.iter().filter(|r| r.simulated.is_some()).count();
    let traced = random.iter().filter(|r| r.2).count() + rows.iter().filter(|r| r.traced).count();
    if runs > 0 && traced * 10 < runs {
        failures.push(format!("only {traced} of {runs} runs traced"));
    }
    Criterion::new(5, "resource invariants", format!("{runs} runs checked, {traced} traced and audited"), failures)
}

pub fn criterion_weight_load() -> Criterion {
    let mut failures = Vec::new();
    let mut cases = 0;
    for r in 1..=16 {
        for nj in 1..=r {
            for bc in [1, 2, 4] {
                cases += 1;
                let (f, s) = (weight_load_latency(r, nj, bc), simulate_weight_load(r, nj, bc));
                if f != s {
                    failures.push(format!("r={r} n_j={nj} b_c={bc}: formula {f}, simulation {s}"));
                }
            }
        }
    }
    Criterion::new(6, "weight-load formula matches the shift-chain simulation", format!("{cases} cases"), failures)
}

/// Small representative spec per kernel for the determinism check.
pub fn determinism_spec(kind: KernelKind) -> KernelSpec {
    match kind {
        KernelKind::MatVec => KernelSpec::matvec(40, 6, DType::Complex),
        KernelKind::MatMul => KernelSpec::matmul(64, 8, 8, DType::Real),
        KernelKind::Conv1D => KernelSpec::conv1d(80, 5, 2, 2, DType::Complex),
        KernelKind::Fir => KernelSpec::fir(100, 12, DType::Real),
        KernelKind::MatchedFilter => KernelSpec::matched_filter(90, 16, 2),
        KernelKind::VecMagSq => KernelSpec::vecmagsq(100, DType::Complex),
        KernelKind::OuterProduct => KernelSpec::outer_product(32, 6, DType::Complex),
        KernelKind::TriSolve => KernelSpec::trisolve(20),
        KernelKind::Cholesky => KernelSpec::cholesky(12),
    }
}

fn criterion_determinism(opts: &SuiteOptions) -> Criterion {
    let kinds: Vec<KernelKind> = KernelKind::ALL.into_iter().filter(|k| opts.wants(*k)).collect();
    let baseline = BaselineTable::shipped();
    let failures: Vec<String> = kinds
        .par_iter()
        .filter_map(|&kind| {
            let spec = determinism_spec(kind);
            let render = || -> Result<Vec<(String, Vec<u8>)>, RunError> {
                let out = run_spec(&spec, &opts.cfg, opts.seed, true)?;
                render_outputs(&out, &opts.cfg, opts.seed, &[Format::Json, Format::Csv], Some(&baseline))
            };
            let first = match render() {
                Ok(f) => f,
                Err(e) => return Some(format!("{}: {e}", spec.key())),
            };
            (1..3).find_map(|rep| match render() {
                Ok(f) if f == first => None,
                Ok(_) => Some(format!("{}: repetition {rep} differs", spec.key())),
                Err(e) => Some(format!("{}: {e}", spec.key())),
            })
        })
        .collect();
    Criterion::new(7, "byte-identical outputs across repetitions", format!("{} kernels x 3 runs", kinds.len()), failures)
}

pub fn criterion_comparison(baseline: &BaselineTable) -> Criterion {
    let reports: Vec<_> = baseline.source(Source::PaperTableI).map(|r| r.report.clone()).collect();
    let rep = compare(&reports, baseline);
    let mut failures = Vec::new();
    match &rep.aggregate {
        None => failures.push("no 'All' aggregate".into()),
        Some(agg) => {
            // One HLS core per kernel, sized for its largest configuration.
            let mut per_kernel = std::collections::BTreeMap::new();
            for row in baseline.source(Source::PaperTableII) {
                let a = per_kernel.entry(row.report.kernel.kind).or_insert(0.0f64);
                *a = a.max(row.report.area_mm2.unwrap_or(0.0));
            }
            let sum: f64 = per_kernel.values().sum();
            if (agg.hls_area_mm2 - sum).abs() > 1e-9 {
                failures.push(format!("HLS area {} vs sum {sum}", agg.hls_area_mm2));
            }
            if agg.sa_area_mm2 != SPATIAL_ARRAY_AREA_MM2 {
                failures.push(format!("array area {}", agg.sa_area_mm2));
            }
        }
    }
    let mut checked = 0;
    for c in &rep.comparisons {
        let (Some(h), Some(r)) = (c.hls_latency, c.hls_over_sa_latency) else {
            failures.push(format!("{}: no HLS ratio", c.kernel));
            continue;
        };
        let hand = (h as f64 / c.latency_cycles as f64 * 100.0).round() / 100.0;
        checked += 1;
        if (r - hand).abs() > 0.01 {
            failures.push(format!("{}: ratio {r:.4} vs {hand}", c.kernel));
        }
    }
    let mm = rep.comparisons.iter().find(|c| c.kernel == KernelSpec::matmul(1024, 8, 8, DType::Real).key());
    if !mm.and_then(|c| c.hls_over_sa_latency).is_some_and(|r| (r - 3.98).abs() <= 0.01) {
        failures.push("matmul (1024,8)x(8,8) ratio is not 3.98".into());
    }
    if !rep.warnings.is_empty() {
        failures.extend(rep.warnings.iter().cloned());
    }
    Criterion::new(8, "comparison report against the HLS baseline", format!("{checked} latency ratios, 'All' aggregate present"), failures)
}

/// Runs every criterion. Independent runs go in parallel; results keep
/// table and kernel order.
pub fn run_suite(opts: &SuiteOptions) -> SuiteRun {
    let baseline = BaselineTable::shipped();
    let rows = table_i(opts, &baseline);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let specs: Vec<KernelSpec> = KernelKind::ALL
        .into_iter()
        .filter(|k| opts.wants(*k))
        .flat_map(|k| (0..opts.samples).map(move |_| k).collect::<Vec<_>>())
        .map(|k| random_spec(k, &mut rng))
        .collect();
    let random: Vec<(KernelSpec, Result<u64, String>, bool)> = specs
        .into_par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let traced = i % 10 == 0;
            let seed = opts.seed.wrapping_add(i as u64);
            let res = run_spec(&spec, &opts.cfg, seed, traced).map(|o| o.sim.latency_cycles).map_err(|e| e.to_string());
            (spec, res, traced)
        })
        .collect();
    let outcomes = run_rows(opts, &rows, 10, random.len());

    let mut criteria = vec![
        criterion_oracle(opts, &random),
        criterion_lower_bounds(&outcomes),
        criterion_identities(&rows),
        criterion_bands(&outcomes, &random),
        criterion_resources(&outcomes, &random),
        criterion_weight_load(),
        criterion_determinism(opts),
        criterion_comparison(&baseline),
    ];
    criteria.sort_by_key(|c| c.id);
    SuiteRun { rows: outcomes, random, criteria }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_specs_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in KernelKind::ALL {
            for _ in 0..20 {
                let s = random_spec(kind, &mut rng);
                assert!(s.validate().is_ok());
                assert!(s.input_shape.0 <= 1024);
            }
        }
    }

    #[test]
    fn weight_load_criterion_passes() {
        assert!(criterion_weight_load().passed);
    }

    #[test]
    fn comparison_criterion_passes() {
        let c = criterion_comparison(&BaselineTable::shipped());
        assert!(c.passed, "{:?}", c.failures);
    }
}
