use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sa_sim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sa-sim"))
        .args(args)
        .env("SA_SIM_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const MATMUL: &[&str] = &["run", "--kernel", "matmul", "--in", "1024x4", "--w", "4x8", "--dtype", "real"];
const MATMUL_KEY: &str = "matmul_1024x4_4x8_real-real";

#[test]
fn run_writes_reports_in_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = MATMUL.to_vec();
    args.push("--validate-against-baseline");
    let o = sa_sim(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("within band"));
    let rec = json(&dir.path().join(format!("{MATMUL_KEY}.json")));
    let lat = rec["report"]["latency_cycles"].as_u64().unwrap();
    assert!((lat as f64 - 527.0).abs() <= 52.7, "{lat}");
    assert_eq!(rec["report"]["lower_bound_cycles"], 512);
    assert_eq!(rec["baseline"]["table_latency"], 527);
    let csv = fs::read_to_string(dir.path().join(format!("{MATMUL_KEY}.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn out_flag_overrides_the_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let mut args = vec!["--out", flag_dir.path().to_str().unwrap()];
    args.extend_from_slice(&["run", "--kernel", "vecmagsq", "--in", "64x1", "--format", "json"]);
    let o = sa_sim(env_dir.path(), &args);
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.path().join("vecmagsq_64x1_64x1_complex-complex.json").exists());
    assert!(!flag_dir.path().join("vecmagsq_64x1_64x1_complex-complex.csv").exists());
    assert_eq!(fs::read_dir(env_dir.path()).unwrap().count(), 0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let args = ["run", "--kernel", "fir", "--in", "200x1", "--w", "9x1", "--dtype", "complex", "--seed", "42", "--trace"];
    for d in &dirs {
        assert_eq!(sa_sim(d.path(), &args).status.code(), Some(0));
    }
    let files = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().path()).collect();
        v.sort();
        v.into_iter().map(|p| (p.file_name().unwrap().to_owned(), fs::read(&p).unwrap())).collect::<Vec<_>>()
    };
    let first = files(dirs[0].path());
    assert_eq!(first.len(), 4);
    for d in &dirs[1..] {
        assert_eq!(files(d.path()), first);
    }
}

#[test]
fn degenerate_shape_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sa_sim(dir.path(), &["run", "--kernel", "matmul", "--in", "0x4", "--w", "4x8"]);
    assert_eq!(o.status.code(), Some(1));
    let o = sa_sim(dir.path(), &["run", "--kernel", "trisolve", "--in", "65x65"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_filters_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = sa_sim(dir.path(), &["validate", "--rows", "matvec", "--samples", "3"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    let rows: Vec<&str> = text.lines().filter(|l| l.contains("_1024x")).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|l| l.starts_with("PASS matvec")));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS criterion")).count(), 8);
}

#[test]
fn validate_on_a_small_array_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = sa_sim(dir.path(), &["validate", "--array", "4x4", "--rows", "matvec", "--samples", "2"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(2), "{text}");
    // Four times fewer multipliers: bounds grow fourfold.
    assert!(text.contains("lb 1024 (table Some(256))"), "{text}");
    assert!(text.contains("FAIL criterion 2"));
}

#[test]
fn report_aggregates_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        MATMUL,
        &["run", "--kernel", "vecmagsq", "--in", "512x1", "--format", "json"],
        &["run", "--kernel", "matvec", "--in", "1024x4", "--format", "json"],
    ];
    for r in runs {
        assert_eq!(sa_sim(dir.path(), r).status.code(), Some(0));
    }
    let inputs = [
        format!("{MATMUL_KEY}.json"),
        "vecmagsq_512x1_512x1_complex-complex.json".into(),
        "matvec_1024x4_4x1_complex-complex.json".into(),
    ];
    let paths: Vec<String> = inputs.iter().map(|f| dir.path().join(f).to_string_lossy().into_owned()).collect();
    let mut args = vec!["report"];
    args.extend(paths.iter().map(String::as_str));
    let o = sa_sim(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0));
    let rep = json(&dir.path().join("comparison.json"));
    assert_eq!(rep["comparisons"].as_array().unwrap().len(), 3);
    assert_eq!(rep["aggregate"]["sa_area_mm2"], 1.014);
    let charts = json(&dir.path().join("charts.json"));
    assert!(charts.as_array().unwrap().iter().any(|p| p["kernel"] == "All"));
    assert!(fs::read_to_string(dir.path().join("comparison.csv")).unwrap().lines().count() == 4);
}

#[test]
fn report_without_baseline_still_charts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sa_sim(dir.path(), MATMUL).status.code(), Some(0));
    let input = dir.path().join(format!("{MATMUL_KEY}.json"));
    let o = sa_sim(dir.path(), &["report", "--no-baseline", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rep = json(&dir.path().join("comparison.json"));
    assert!(rep["aggregate"].is_null());
    assert!(rep["comparisons"][0]["table_i_latency"].is_null());
    assert!(!json(&dir.path().join("charts.json")).as_array().unwrap().is_empty());
    assert_eq!(rep["warnings"].as_array().unwrap().len(), 2);
}

#[test]
fn unmatched_kernels_are_warned_about() {
    let dir = tempfile::tempdir().unwrap();
    let run = ["run", "--kernel", "matmul", "--in", "10x3", "--w", "3x5", "--format", "json"];
    assert_eq!(sa_sim(dir.path(), &run).status.code(), Some(0));
    let input = dir.path().join("matmul_10x3_3x5_complex-complex.json");
    let o = sa_sim(dir.path(), &["report", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: matmul_10x3_3x5_complex-complex: no HLS baseline row"));
}

#[test]
fn unreadable_report_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sa_sim(dir.path(), &["report", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
