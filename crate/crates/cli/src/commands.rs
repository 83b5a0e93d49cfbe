use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use sa_core::fabric::ArrayConfig;
use sa_core::numeric::DType;
use sa_core::oracle::{KernelKind, KernelSpec};
use sa_core::perf::{compare, BaselineTable, PerfReport};

use crate::pipeline::{baseline_check, render_outputs, run_spec, Format, RunError};
use crate::suite::{run_suite, SuiteOptions};

pub const OUT_ENV: &str = "SA_SIM_OUT";

#[derive(Parser, Debug)]
#[command(name = "sa-sim", version, about = "Cycle-accurate spatial array simulator")]
pub struct Cli {
    /// Output directory for report files.
    #[arg(long, global = true, env = OUT_ENV, default_value = "sa-sim-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one kernel and write its report.
    Run(RunArgs),
    /// Run the acceptance suite against the published table.
    Validate(ValidateArgs),
    /// Build a comparison report and chart data from run reports.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ArrayArgs {
    /// Array size as ROWSxCOLS.
    #[arg(long, value_parser = parse_dims)]
    pub array: Option<(usize, usize)>,
    #[arg(long)]
    pub top_reads: Option<u8>,
    #[arg(long)]
    pub left_reads: Option<u8>,
    /// Weight slots per PE.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Words per cycle on each vertical link.
    #[arg(long)]
    pub link_bandwidth: Option<u8>,
    #[arg(long)]
    pub injection_points: Option<usize>,
    #[arg(long)]
    pub clock_ghz: Option<f64>,
}

impl ArrayArgs {
    pub fn config(&self) -> ArrayConfig {
        let mut cfg = match self.array {
            Some((r, c)) => ArrayConfig::with_dims(r, c),
            None => ArrayConfig::default(),
        };
        if let Some(v) = self.top_reads {
            cfg.top_reads_per_cycle = v;
        }
        if let Some(v) = self.left_reads {
            cfg.left_reads_per_cycle = v;
        }
        if let Some(v) = self.depth {
            cfg.pe_buffer_depth = v;
        }
        if let Some(v) = self.link_bandwidth {
            cfg.column_shift_bandwidth = v;
        }
        if let Some(v) = self.injection_points {
            cfg.injection_points = v;
        }
        if let Some(v) = self.clock_ghz {
            cfg.clock_ghz = v;
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kernel: KernelKind,
    /// Input shape as ROWSxCOLS.
    #[arg(long = "in", value_parser = parse_dims)]
    pub input: (usize, usize),
    /// Weight shape as ROWSxCOLS; defaults from the input where implied.
    #[arg(long = "w", value_parser = parse_dims)]
    pub weight: Option<(usize, usize)>,
    #[arg(long, default_value = "complex", value_parser = parse_dtype)]
    pub dtype: DType,
    /// Weight type when it differs from the input.
    #[arg(long, value_parser = parse_dtype)]
    pub dtype_w: Option<DType>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 1)]
    pub streams: usize,
    /// Number of output windows for convolution kernels.
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "json,csv")]
    pub format: Vec<FormatArg>,
    /// Record the cycle trace and the schedule.
    #[arg(long)]
    pub trace: bool,
    /// Check the latency against the published row.
    #[arg(long)]
    pub validate_against_baseline: bool,
    #[command(flatten)]
    pub array: ArrayArgs,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Only these kernels (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub rows: Vec<KernelKind>,
    /// Random specs per kernel for the oracle check.
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[command(flatten)]
    pub array: ArrayArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report files written by `run`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Baseline CSV to compare against instead of the bundled tables.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Compare against no baseline at all.
    #[arg(long, conflicts_with = "baseline")]
    pub no_baseline: bool,
}

pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((n(r)?, n(c)?))
}

fn parse_kind(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: sa_core::oracle::SpecError| e.to_string())
}

fn parse_dtype(s: &str) -> Result<DType, String> {
    s.parse().map_err(|e: sa_core::numeric::NumericError| e.to_string())
}

/// Builds the spec a `run` invocation describes.
pub fn spec_from_args(a: &RunArgs) -> KernelSpec {
    let (r, c) = a.input;
    let dtype_w = a.dtype_w.unwrap_or(a.dtype);
    let mut spec = match a.kernel {
        KernelKind::MatVec => KernelSpec::matvec(r, c, a.dtype),
        KernelKind::MatMul => KernelSpec::matmul(r, c, a.weight.map_or(1, |w| w.1), a.dtype),
        KernelKind::Fir => KernelSpec::fir(r, a.weight.map_or(1, |w| w.0), a.dtype),
        KernelKind::Conv1D => {
            let (k, ch) = a.weight.unwrap_or((1, 1));
            KernelSpec::conv1d(r, k, ch, a.stride, a.dtype)
        }
        KernelKind::MatchedFilter => KernelSpec::matched_filter(r, a.weight.map_or(1, |w| w.0), a.streams),
        KernelKind::VecMagSq => KernelSpec::vecmagsq(r, a.dtype),
        KernelKind::OuterProduct => KernelSpec::outer_product(r, c, a.dtype),
        KernelKind::TriSolve => KernelSpec::trisolve(r),
        KernelKind::Cholesky => KernelSpec::cholesky(r),
    };
    // Explicit shapes win so that inconsistent ones reach validation.
    spec.input_shape = a.input;
    if let Some(w) = a.weight {
        spec.weight_shape = w;
    }
    if !spec.kind.is_float() && spec.kind != KernelKind::MatchedFilter {
        spec.dtype_in = a.dtype;
        spec.dtype_w = dtype_w;
    }
    spec.stride = a.stride;
    spec.streams = a.streams;
    spec.window_count_override = a.windows;
    spec
}

fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_run(a: &RunArgs, out_dir: &Path) -> i32 {
    let spec = spec_from_args(a);
    let cfg = a.array.config();
    let formats: Vec<Format> = a
        .format
        .iter()
        .map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        })
        .collect();
    let baseline = a.validate_against_baseline.then(BaselineTable::shipped);
    let result = run_spec(&spec, &cfg, a.seed, a.trace)
        .and_then(|out| render_outputs(&out, &cfg, a.seed, &formats, baseline.as_ref()).map(|f| (out, f)));
    let (out, files) = match result {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = write_files(out_dir, &files) {
        eprintln!("error: {e}");
        return RunError::Config(e).exit_code();
    }
    let r = &out.report;
    println!(
        "{}: latency {} cycles, lower bound {}, utilization {:.2}%, {:.2} GOPS",
        spec.key(),
        r.latency_cycles,
        r.lower_bound_cycles.unwrap_or(0),
        r.utilization_pct.unwrap_or(0.0),
        r.throughput_gops
    );
    if let Some(check) = baseline.as_ref().and_then(|b| baseline_check(&spec, r.latency_cycles, b)) {
        let verdict = match check.within_band {
            Some(true) => "within band",
            Some(false) => "OUTSIDE band",
            None => "exempt from band",
        };
        println!("baseline: table {} cycles, {:+.2}% ({verdict})", check.table_latency, check.delta_pct);
    }
    0
}

pub fn cmd_validate(a: &ValidateArgs) -> i32 {
    let opts = SuiteOptions {
        cfg: a.array.config(),
        seed: a.seed,
        samples: a.samples,
        kinds: (!a.rows.is_empty()).then(|| a.rows.clone()),
    };
    if let Err(e) = opts.cfg.validate() {
        eprintln!("error: {e}");
        return 1;
    }
    let run = run_suite(&opts);
    for row in &run.rows {
        println!("{}", row.line());
    }
    for c in &run.criteria {
        println!("{}", c.line());
        for f in c.failures.iter().take(10) {
            println!("    {f}");
        }
    }
    if run.passed() {
        0
    } else {
        2
    }
}

/// Accepts files written by `run` or bare performance reports.
fn read_report(path: &Path) -> Result<PerfReport, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let inner = value.get("report").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| format!("{}: not a report: {e}", path.display()))
}

pub fn cmd_report(a: &ReportArgs, out_dir: &Path) -> i32 {
    let reports: Result<Vec<PerfReport>, String> = a.inputs.iter().map(|p| read_report(p)).collect();
    let baseline = match (&a.baseline, a.no_baseline) {
        (_, true) => Ok(BaselineTable { rows: Vec::new() }),
        (Some(p), _) => fs::read_to_string(p)
            .map_err(|e| format!("{}: {e}", p.display()))
            .and_then(|t| BaselineTable::from_csv(&t).map_err(|e| format!("{}: {e}", p.display()))),
        (None, false) => Ok(BaselineTable::shipped()),
    };
    let (reports, baseline) = match (reports, baseline) {
        (Ok(r), Ok(b)) => (r, b),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let rep = compare(&reports, &baseline);
    let rendered = rep.to_json().and_then(|j| Ok((j, rep.to_csv()?, rep.charts_json()?)));
    let (json, csv, charts) = match rendered {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let files = [
        ("comparison.json".to_string(), json.into_bytes()),
        ("comparison.csv".to_string(), csv.into_bytes()),
        ("charts.json".to_string(), charts.into_bytes()),
    ];
    if let Err(e) = write_files(out_dir, &files) {
        eprintln!("error: {e}");
        return 1;
    }
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} kernels compared, {} chart points, {} warnings",
        rep.comparisons.len(),
        rep.charts.len(),
        rep.warnings.len()
    );
    0
}

pub fn dispatch(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Run(a) => cmd_run(a, &cli.out),
        Command::Validate(a) => cmd_validate(a),
        Command::Report(a) => cmd_report(a, &cli.out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("1024x4"), Ok((1024, 4)));
        assert_eq!(parse_dims("8X8"), Ok((8, 8)));
        assert!(parse_dims("8").is_err());
        assert!(parse_dims("ax2").is_err());
    }

    #[test]
    fn run_args_build_table_specs() {
        let cli = Cli::parse_from(["sa-sim", "run", "--kernel", "matmul", "--in", "1024x4", "--w", "4x8", "--dtype", "real"]);
        let Command::Run(a) = cli.command else { panic!("expected run") };
        assert_eq!(spec_from_args(&a), KernelSpec::matmul(1024, 4, 8, DType::Real));
        let cli = Cli::parse_from(["sa-sim", "run", "--kernel", "matched_filter", "--in", "1024x1", "--w", "32x1", "--streams", "8"]);
        let Command::Run(a) = cli.command else { panic!("expected run") };
        assert_eq!(spec_from_args(&a), KernelSpec::matched_filter(1024, 32, 8));
        let cli = Cli::parse_from(["sa-sim", "run", "--kernel", "vecmagsq", "--in", "512x1"]);
        let Command::Run(a) = cli.command else { panic!("expected run") };
        assert_eq!(spec_from_args(&a), KernelSpec::vecmagsq(512, DType::Complex));
    }

    #[test]
    fn array_overrides_apply() {
        let cli = Cli::parse_from(["sa-sim", "validate", "--array", "4x4", "--rows", "matvec,mm"]);
        let Command::Validate(a) = cli.command else { panic!("expected validate") };
        assert_eq!(a.array.config().pe_count(), 16);
        assert_eq!(a.rows, vec![KernelKind::MatVec, KernelKind::MatMul]);
    }
}
