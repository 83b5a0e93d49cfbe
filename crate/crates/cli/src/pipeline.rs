//! spec → operands → oracle → mapper → simulator → report.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use sa_core::fabric::{assert_resources, audit_trace, simulate, ArrayConfig, SimResult, TraceAudit};
use sa_core::mappers::{map, MapError};
use sa_core::oracle::{generate_operands, reference, KernelKind, KernelSpec};
use sa_core::perf::{BaselineTable, PerfError, PerfReport, Source, SCHEMA_VERSION};

/// Relative latency band around published figures.
pub const LATENCY_BAND: f64 = 0.10;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("oracle mismatch: {0}")]
    Oracle(String),
    #[error("resource violation: {0}")]
    Resource(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Oracle(_) => 2,
            RunError::Resource(_) => 3,
        }
    }
}

pub struct RunOutput {
    pub spec: KernelSpec,
    pub report: PerfReport,
    pub sim: SimResult,
    pub notes: Vec<String>,
    pub schedule_jsonl: Option<String>,
    pub audit: Option<TraceAudit>,
}

/// Runs one kernel end to end. With `trace` the simulator records events
/// and the trace is audited independently.
pub fn run_spec(spec: &KernelSpec, cfg: &ArrayConfig, seed: u64, trace: bool) -> Result<RunOutput, RunError> {
    let cfg_err = |e: &dyn std::fmt::Display| RunError::Config(format!("{}: {e}", spec.key()));
    spec.validate().map_err(|e| cfg_err(&e))?;
    cfg.validate().map_err(|e| cfg_err(&e))?;
    let operands = generate_operands(spec, seed).map_err(|e| cfg_err(&e))?;
    let expected = reference(spec, &operands).map_err(|e| cfg_err(&e))?;
    let sched = map(spec, cfg).map_err(|e| match e {
        MapError::Spec(_) | MapError::Config(_) | MapError::Unsupported { .. } => cfg_err(&e),
    })?;
    let resources = assert_resources(&sched, cfg);
    if let Some(v) = resources.violation {
        return Err(RunError::Resource(format!("{}: {v:?}", spec.key())));
    }
    let sim = simulate(&sched, &operands, cfg, trace).map_err(|e| {
        let msg = format!("{}: {e}", spec.key());
        if e.is_resource_violation() {
            RunError::Resource(msg)
        } else {
            RunError::Oracle(msg)
        }
    })?;
    if !sim.output.matches(&expected) {
        let diff = sim.output.max_abs_diff(&expected);
        return Err(RunError::Oracle(format!("{}: output differs from the reference (max diff {diff:?})", spec.key())));
    }
    let report = PerfReport::simulated(spec, cfg, sim.latency_cycles).map_err(|e| match e {
        PerfError::LatencyBelowBound { .. } => RunError::Oracle(format!("{}: {e}", spec.key())),
        other => cfg_err(&other),
    })?;
    let audit = sim.trace.as_ref().map(|t| audit_trace(t, cfg));
    if let Some(a) = &audit {
        if !a.is_clean() {
            return Err(RunError::Resource(format!("{}: trace audit {a:?}", spec.key())));
        }
    }
    Ok(RunOutput {
        spec: spec.clone(),
        report,
        notes: sched.notes.clone(),
        schedule_jsonl: trace.then(|| sched.to_jsonl()),
        sim,
        audit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineCheck {
    pub table_latency: u64,
    pub delta_pct: f64,
    /// `None` for kernels exempt from the band.
    pub within_band: Option<bool>,
}

/// Compares a simulated latency with the published array row, if any.
pub fn baseline_check(spec: &KernelSpec, latency: u64, baseline: &BaselineTable) -> Option<BaselineCheck> {
    let row = baseline.find(spec, Source::PaperTableI)?;
    let table = row.report.latency_cycles;
    let delta_pct = 100.0 * (latency as f64 - table as f64) / table as f64;
    let exempt = spec.kind == KernelKind::Fir;
    Some(BaselineCheck { table_latency: table, delta_pct, within_band: (!exempt).then_some(delta_pct.abs() <= 100.0 * LATENCY_BAND) })
}

#[derive(Serialize)]
struct RunRecord<'a> {
    schema_version: u32,
    seed: u64,
    config: &'a ArrayConfig,
    report: &'a PerfReport,
    mult_busy_cycles: u64,
    stall_cycles_memory: u64,
    per_bank_read_totals: &'a BTreeMap<String, u64>,
    notes: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<BaselineCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_audit: Option<&'a TraceAudit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
struct CsvRecord<'a> {
    kernel: &'a str,
    source: &'static str,
    latency_cycles: u64,
    lower_bound_cycles: Option<u64>,
    utilization_pct: Option<f64>,
    throughput_gops: f64,
    clock_ghz: f64,
    total_ops: u64,
    area_mm2: Option<f64>,
    power_mw: Option<f64>,
    memory_bound_cycles: Option<u64>,
    mult_busy_cycles: u64,
    stall_cycles_memory: u64,
}

/// File names and contents for one run. Rendering is a pure function of
/// its inputs, so identical runs give identical bytes.
pub fn render_outputs(
    out: &RunOutput,
    cfg: &ArrayConfig,
    seed: u64,
    formats: &[Format],
    baseline: Option<&BaselineTable>,
) -> Result<Vec<(String, Vec<u8>)>, RunError> {
    let key = out.spec.key();
    let internal = |e: &dyn std::fmt::Display| RunError::Config(format!("{key}: rendering failed: {e}"));
    let mut files = Vec::new();
    if formats.contains(&Format::Json) {
        let record = RunRecord {
            schema_version: SCHEMA_VERSION,
            seed,
            config: cfg,
            report: &out.report,
            mult_busy_cycles: out.sim.mult_busy_cycles,
            stall_cycles_memory: out.sim.stall_cycles_memory,
            per_bank_read_totals: &out.sim.per_bank_read_totals,
            notes: &out.notes,
            baseline: baseline.and_then(|b| baseline_check(&out.spec, out.sim.latency_cycles, b)),
            trace_audit: out.audit.as_ref(),
        };
        let text = serde_json::to_string_pretty(&record).map_err(|e| internal(&e))? + "\n";
        files.push((format!("{key}.json"), text.into_bytes()));
    }
    if formats.contains(&Format::Csv) {
        let r = &out.report;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(CsvRecord {
            kernel: &key,
            source: r.source.as_str(),
            latency_cycles: r.latency_cycles,
            lower_bound_cycles: r.lower_bound_cycles,
            utilization_pct: r.utilization_pct,
            throughput_gops: r.throughput_gops,
            clock_ghz: r.clock_ghz,
            total_ops: r.total_ops,
            area_mm2: r.area_mm2,
            power_mw: r.power_mw,
            memory_bound_cycles: r.memory_bound_cycles,
            mult_busy_cycles: out.sim.mult_busy_cycles,
            stall_cycles_memory: out.sim.stall_cycles_memory,
        })
        .map_err(|e| internal(&e))?;
        files.push((format!("{key}.csv"), w.into_inner().map_err(|e| internal(&e))?));
    }
    if let Some(trace) = out.sim.trace_jsonl() {
        files.push((format!("{key}.trace.jsonl"), trace.into_bytes()));
    }
    if let Some(s) = &out.schedule_jsonl {
        files.push((format!("{key}.schedule.jsonl"), s.clone().into_bytes()));
    }
    Ok(files)
}
