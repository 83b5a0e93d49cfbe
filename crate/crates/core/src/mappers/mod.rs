//! Kernel mappers: each turns a [`KernelSpec`] into a timed micro-op
//! schedule for a given [`ArrayConfig`].

mod builder;
mod conv;
mod linalg;
mod matmul;
mod matvec;
mod tiles;
mod vecmagsq;

use thiserror::Error;

use crate::fabric::{ArrayConfig, Layout, RegionRole, Schedule, SimError, WordFormat};
use crate::oracle::{KernelKind, KernelSpec, SpecError};

pub use tiles::{plan_tiles, TileGroup, TilePlan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Config(#[from] SimError),
    #[error("cannot map {kernel}: {reason}")]
    Unsupported { kernel: KernelKind, reason: String },
}

/// Builds the schedule for `spec` on `cfg`.
pub fn map(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    spec.validate()?;
    cfg.validate()?;
    let sched = match spec.kind {
        KernelKind::MatVec => matvec::map_matvec(spec, cfg),
        KernelKind::MatMul => matmul::map_matmul(spec, cfg),
        KernelKind::OuterProduct => matmul::map_outer_product(spec, cfg),
        KernelKind::Conv1D if spec.out_channels() > 1 => matmul::map_conv_im2col(spec, cfg),
        KernelKind::Conv1D | KernelKind::Fir | KernelKind::MatchedFilter => conv::map_conv(spec, cfg),
        KernelKind::VecMagSq => vecmagsq::map_vecmagsq(spec, cfg),
        KernelKind::TriSolve => linalg::map_trisolve(spec, cfg),
        KernelKind::Cholesky => linalg::map_cholesky(spec, cfg),
    }?;
    Ok(sched)
}

/// Input, weight (when the kernel has one) and output regions, laid out
/// back to back in that order.
pub(crate) fn standard_layout(spec: &KernelSpec) -> Layout {
    let mut layout = Layout::default();
    let fmt = |d| if spec.kind.is_float() { WordFormat::Float } else { WordFormat::from_dtype(d) };
    let (ir, ic) = spec.input_operand_shape();
    layout.push(RegionRole::Input, ir, ic, fmt(spec.dtype_in));
    if let Some((wr, wc)) = spec.weight_operand_shape() {
        layout.push(RegionRole::Weight, wr, wc, fmt(spec.dtype_w));
    }
    let (or, oc) = spec.output_shape();
    layout.push(RegionRole::Output, or, oc, fmt(spec.output_dtype()));
    layout
}

pub(crate) fn region(layout: &Layout, role: RegionRole) -> crate::fabric::Region {
    *layout.find(role).expect("standard layout has every role the mapper asks for")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::fabric::{assert_resources, simulate, SimResult};
    use crate::numeric::DType;
    use crate::oracle::{generate_operands, reference};

    /// Maps, checks resources, simulates and compares against the oracle.
    pub(crate) fn run_checked(spec: &KernelSpec, cfg: &ArrayConfig, seed: u64) -> SimResult {
        let sched = map(spec, cfg).unwrap_or_else(|e| panic!("{}: {e}", spec.key()));
        let report = assert_resources(&sched, cfg);
        assert!(report.is_clean(), "{}: {:?}", spec.key(), report.violation);
        let ops = generate_operands(spec, seed).unwrap();
        let res = simulate(&sched, &ops, cfg, false).unwrap_or_else(|e| panic!("{}: {e}", spec.key()));
        let expect = reference(spec, &ops).unwrap();
        assert!(res.output.matches(&expect), "{}: diff {:?}", spec.key(), res.output.max_abs_diff(&expect));
        res
    }

    #[test]
    fn gemm_shapes_match_the_oracle() {
        let cfg = ArrayConfig::default();
        for (m, k, n) in [(1, 1, 1), (3, 2, 5), (16, 4, 8), (9, 8, 8), (5, 20, 3), (7, 17, 19), (4, 40, 40)] {
            for dt in [DType::Real, DType::Complex] {
                run_checked(&KernelSpec::matmul(m, k, n, dt), &cfg, 7);
            }
        }
    }

    #[test]
    fn gemm_mixed_types() {
        let cfg = ArrayConfig::default();
        let spec = KernelSpec::matmul(6, 10, 9, DType::Real).with_dtypes(DType::Real, DType::Complex);
        run_checked(&spec, &cfg, 3);
        let spec = KernelSpec::matmul(6, 10, 9, DType::Real).with_dtypes(DType::Complex, DType::Real);
        run_checked(&spec, &cfg, 3);
    }

    #[test]
    fn table_matmul_latencies() {
        let cfg = ArrayConfig::default();
        for ((k, n), want) in [((4, 8), 527), ((4, 16), 1039), ((8, 8), 1039), ((8, 16), 2063), ((16, 8), 2063), ((16, 16), 4119)] {
            let res = run_checked(&KernelSpec::matmul(1024, k, n, DType::Real), &cfg, 1);
            let rel = (res.latency_cycles as f64 - want as f64).abs() / want as f64;
            assert!(rel <= 0.10, "1024x{k}x{n}: {} vs {want}", res.latency_cycles);
        }
    }

    #[test]
    fn outer_product_and_im2col() {
        let cfg = ArrayConfig::default();
        let res = run_checked(&KernelSpec::outer_product(1024, 8, DType::Complex), &cfg, 2);
        eprintln!("outer 1024x8: {}", res.latency_cycles);
        let res = run_checked(&KernelSpec::outer_product(1024, 32, DType::Complex), &cfg, 2);
        eprintln!("outer 1024x32: {}", res.latency_cycles);
        run_checked(&KernelSpec::outer_product(20, 11, DType::Real), &cfg, 2);
        run_checked(&KernelSpec::conv1d(50, 5, 3, 2, DType::Complex), &cfg, 2);
        run_checked(&KernelSpec::conv1d(40, 12, 10, 1, DType::Real), &cfg, 2);
    }

    #[test]
    fn vecmagsq_matches_and_hits_table() {
        let cfg = ArrayConfig::default();
        for n in [1, 7, 8, 9, 100] {
            run_checked(&KernelSpec::vecmagsq(n, DType::Real), &cfg, 4);
            run_checked(&KernelSpec::vecmagsq(n, DType::Complex), &cfg, 4);
        }
        for (n, want) in [(512, 64), (1024, 128)] {
            let res = run_checked(&KernelSpec::vecmagsq(n, DType::Complex), &cfg, 4);
            eprintln!("vecmagsq {n}: {}", res.latency_cycles);
            assert!((res.latency_cycles as f64 - want as f64).abs() <= 0.1 * want as f64);
        }
    }

    #[test]
    fn matvec_matches_and_hits_table() {
        let cfg = ArrayConfig::default();
        for (m, k) in [(1, 1), (5, 3), (20, 8), (9, 13), (17, 70)] {
            run_checked(&KernelSpec::matvec(m, k, DType::Real), &cfg, 5);
            run_checked(&KernelSpec::matvec(m, k, DType::Complex), &cfg, 5);
        }
        for (k, want) in [(4, 530), (8, 1042), (16, 2066)] {
            let res = run_checked(&KernelSpec::matvec(1024, k, DType::Complex), &cfg, 5);
            eprintln!("matvec 1024x{k}: {}", res.latency_cycles);
            assert!((res.latency_cycles as f64 - want as f64).abs() <= 0.1 * want as f64);
        }
    }

    #[test]
    fn conv_family_matches_and_hits_table() {
        let cfg = ArrayConfig::default();
        for dt in [DType::Real, DType::Complex] {
            run_checked(&KernelSpec::fir(40, 5, dt), &cfg, 6);
            run_checked(&KernelSpec::fir(100, 32, dt), &cfg, 6);
            run_checked(&KernelSpec::fir(100, 70, dt), &cfg, 6);
            run_checked(&KernelSpec::fir(30, 1, dt), &cfg, 6);
            run_checked(&KernelSpec::conv1d(60, 7, 1, 3, dt), &cfg, 6);
            run_checked(&KernelSpec::conv1d(60, 9, 1, 9, dt), &cfg, 6);
            run_checked(&KernelSpec::fir(90, 32, dt).with_windows(20), &cfg, 6);
        }
        run_checked(&KernelSpec::matched_filter(50, 12, 3), &cfg, 6);
        run_checked(&KernelSpec::matched_filter(30, 80, 2), &cfg, 6);
        for (streams, want) in [(1, 2232), (8, 18180)] {
            let res = run_checked(&KernelSpec::matched_filter(1024, 32, streams), &cfg, 6);
            eprintln!("matched filter x{streams}: {}", res.latency_cycles);
            assert!((res.latency_cycles as f64 - want as f64).abs() <= 0.1 * want as f64);
        }
        let fir = run_checked(&KernelSpec::fir(1024, 32, DType::Real), &cfg, 6);
        eprintln!("fir real: {}", fir.latency_cycles);
        let fir = run_checked(&KernelSpec::fir(1024, 32, DType::Complex), &cfg, 6);
        eprintln!("fir complex: {}", fir.latency_cycles);
    }

    #[test]
    fn float_kernels_match_the_oracle() {
        let cfg = ArrayConfig::default();
        for n in [1, 2, 5, 16, 31, 64] {
            let t = run_checked(&KernelSpec::trisolve(n), &cfg, 8);
            let c = run_checked(&KernelSpec::cholesky(n), &cfg, 8);
            eprintln!("n={n}: trisolve {} cholesky {}", t.latency_cycles, c.latency_cycles);
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let spec = KernelSpec::matmul(4, 3, 2, DType::Complex);
        let l = standard_layout(&spec);
        assert_eq!(l.regions.len(), 3);
        assert_eq!(l.regions[1].base, 12);
        assert_eq!(l.regions[2].base, 18);
        assert_eq!(l.total_len(), 26);
    }

    #[test]
    fn vecmagsq_has_no_weight_region() {
        let l = standard_layout(&KernelSpec::vecmagsq(16, DType::Complex));
        assert!(l.find(RegionRole::Weight).is_none());
        assert_eq!(l.find(RegionRole::Output).unwrap().format, WordFormat::Real);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = KernelSpec::matmul(4, 3, 2, DType::Real).with_stride(0);
        assert!(matches!(map(&spec, &ArrayConfig::default()), Err(MapError::Spec(_))));
    }
}
