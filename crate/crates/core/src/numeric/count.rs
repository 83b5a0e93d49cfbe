use serde::{Deserialize, Serialize};

use crate::numeric::DType;
use crate::oracle::{KernelKind, KernelSpec, SpecError};

/// Arithmetic work of a kernel instance. Every multiplication and every
/// addition counts as one operation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub real_mults: u64,
    pub total_ops: u64,
}

impl OpCount {
    pub fn scaled(self, k: u64) -> OpCount {
        OpCount { real_mults: self.real_mults * k, total_ops: self.total_ops * k }
    }

    fn add(self, other: OpCount) -> OpCount {
        OpCount {
            real_mults: self.real_mults + other.real_mults,
            total_ops: self.total_ops + other.total_ops,
        }
    }
}

/// Real multiplications in one multiply-accumulate of the given operand types.
pub fn mults_per_mac(a: DType, b: DType) -> u64 {
    match (a, b) {
        (DType::Real, DType::Real) => 1,
        (DType::Complex, DType::Complex) => 4,
        _ => 2,
    }
}

/// `macs` multiply-accumulates: each real multiply pairs with one add.
fn macs(n: u64, a: DType, b: DType) -> OpCount {
    let m = mults_per_mac(a, b);
    OpCount { real_mults: n * m, total_ops: 2 * n * m }
}

pub fn count_ops(spec: &KernelSpec) -> Result<OpCount, SpecError> {
    spec.validate()?;
    let (ir, ic) = spec.input_shape;
    let (wr, wc) = spec.weight_shape;
    let (ir, ic, wr, wc) = (ir as u64, ic as u64, wr as u64, wc as u64);
    let (a, b) = (spec.dtype_in, spec.dtype_w);
    let count = match spec.kind {
        KernelKind::MatVec => macs(ir * ic, a, b),
        KernelKind::MatMul => macs(ir * ic * wc, a, b),
        KernelKind::Conv1D | KernelKind::Fir => macs(spec.window_count() as u64 * wr * wc, a, b),
        KernelKind::MatchedFilter => {
            macs(spec.window_count() as u64 * wr, a, b).scaled(spec.streams as u64)
        }
        // Each element is costed as one full complex multiply.
        KernelKind::VecMagSq => macs(ir, a, a),
        KernelKind::OuterProduct => macs(ir * ic * ic, a, b),
        KernelKind::TriSolve => {
            let n = ir;
            // One reciprocal-multiply per pivot plus one MAC per update.
            let updates = macs(n * (n - 1) / 2, DType::Real, DType::Real);
            updates.add(OpCount { real_mults: n, total_ops: n })
        }
        KernelKind::Cholesky => {
            let n = ir;
            let mut total = OpCount::default();
            for k in 0..n {
                let rest = n - k;
                // inverse square root, reciprocal, and the scaled column
                total = total.add(OpCount { real_mults: 2 + rest, total_ops: 2 + rest });
                for j in (k + 1)..n {
                    // alpha = inv * a[k, j], then one MAC per trailing element
                    total = total.add(OpCount { real_mults: 1, total_ops: 1 });
                    total = total.add(macs(n - j, DType::Real, DType::Real));
                }
            }
            total
        }
    };
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let mv = count_ops(&KernelSpec::matvec(1024, 4, DType::Complex)).unwrap();
        assert_eq!(mv, OpCount { real_mults: 16384, total_ops: 32768 });
        let mm = count_ops(&KernelSpec::matmul(1024, 4, 8, DType::Real)).unwrap();
        assert_eq!(mm, OpCount { real_mults: 32768, total_ops: 65536 });
        let sq = count_ops(&KernelSpec::vecmagsq(512, DType::Complex)).unwrap();
        assert_eq!(sq, OpCount { real_mults: 2048, total_ops: 4096 });
        let mf = count_ops(&KernelSpec::matched_filter(1024, 32, 1)).unwrap();
        assert_eq!(mf.real_mults, 131072 + 128);
        assert_eq!(mf.total_ops, 1025 * 32 * 8);
    }

    #[test]
    fn streams_scale_linearly() {
        let one = count_ops(&KernelSpec::matched_filter(1024, 32, 1)).unwrap();
        let eight = count_ops(&KernelSpec::matched_filter(1024, 32, 8)).unwrap();
        assert_eq!(eight, one.scaled(8));
    }

    #[test]
    fn mixed_types() {
        let s = KernelSpec::matmul(2, 3, 4, DType::Real).with_dtypes(DType::Real, DType::Complex);
        assert_eq!(count_ops(&s).unwrap(), OpCount { real_mults: 48, total_ops: 96 });
    }

    #[test]
    fn float_kernels() {
        // 3x3 forward substitution: 3 pivots + 3 updates.
        let t = count_ops(&KernelSpec::trisolve(3)).unwrap();
        assert_eq!(t, OpCount { real_mults: 6, total_ops: 9 });
        let c = count_ops(&KernelSpec::cholesky(1)).unwrap();
        assert_eq!(c, OpCount { real_mults: 3, total_ops: 3 });
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(count_ops(&KernelSpec::matmul(0, 1, 1, DType::Real)).is_err());
    }
}
