//! Straight-line reference implementations. These are the ground truth the
//! fabric is checked against, so they stay as plain loops with a single
//! rounding at writeback.

use crate::numeric::{Acc, CValue, DType, FMatrix, Tensor};

use super::SpecError;

const PIVOT_EPS: f64 = 1e-12;

fn result_kind(a: DType, b: DType) -> DType {
    if a.is_complex() || b.is_complex() {
        DType::Complex
    } else {
        DType::Real
    }
}

pub fn ref_matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, SpecError> {
    if a.cols() != b.rows() {
        return Err(SpecError::ShapeMismatch(format!(
            "matmul {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(Tensor::from_fn(a.rows(), b.cols(), result_kind(a.kind(), b.kind()), |i, j| {
        let mut acc = Acc::ZERO;
        for k in 0..a.cols() {
            acc.mac(a.get(i, k), b.get(k, j))?;
        }
        acc.round()
    })?)
}

pub fn ref_matvec(a: &Tensor, w: &Tensor) -> Result<Tensor, SpecError> {
    if w.cols() != 1 || a.cols() != w.rows() {
        return Err(SpecError::ShapeMismatch(format!(
            "matvec {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            w.rows(),
            w.cols()
        )));
    }
    ref_matmul(a, w)
}

/// Valid cross-correlation of a stacked input column with every filter
/// column of `h`. Output is (windows, filters).
pub fn ref_conv1d(x: &Tensor, h: &Tensor, stride: usize, windows: Option<usize>) -> Result<Tensor, SpecError> {
    if x.cols() != 1 {
        return Err(SpecError::ShapeMismatch("conv input must be a column".into()));
    }
    if stride == 0 {
        return Err(SpecError::Invalid("stride must be at least 1".into()));
    }
    let (n, k) = (x.rows(), h.rows());
    if k > n {
        return Err(SpecError::FilterTooLong { taps: k, len: n });
    }
    let natural = (n - k) / stride + 1;
    let w = windows.unwrap_or(natural);
    if w > natural {
        return Err(SpecError::Invalid(format!("{w} windows requested, only {natural} valid")));
    }
    Ok(Tensor::from_fn(w, h.cols(), result_kind(x.kind(), h.kind()), |j, c| {
        let mut acc = Acc::ZERO;
        for t in 0..k {
            acc.mac(x.get(j * stride + t, 0), h.get(t, c))?;
        }
        acc.round()
    })?)
}

/// Correlates every stream (column of `x`) against the conjugated template,
/// with the input padded by `K` zeros so that `N + 1` lags are produced.
pub fn ref_matched_filter(x: &Tensor, h: &Tensor, lags: Option<usize>) -> Result<Tensor, SpecError> {
    if h.cols() != 1 {
        return Err(SpecError::ShapeMismatch("template must be a column".into()));
    }
    let (n, k, streams) = (x.rows(), h.rows(), x.cols());
    let natural = n + 1;
    let lags = lags.unwrap_or(natural);
    if lags > natural {
        return Err(SpecError::Invalid(format!("{lags} lags requested, only {natural} available")));
    }
    let conj: Vec<CValue> = (0..k).map(|t| h.get(t, 0).conj()).collect::<Result<_, _>>()?;
    Ok(Tensor::from_fn(lags, streams, DType::Complex, |lag, s| {
        let mut acc = Acc::ZERO;
        for (t, hc) in conj.iter().enumerate() {
            let idx = lag + t;
            if idx < n {
                acc.mac(x.get(idx, s), *hc)?;
            }
        }
        acc.round()
    })?)
}

pub fn ref_vecmagsq(x: &Tensor) -> Result<Tensor, SpecError> {
    if x.cols() != 1 {
        return Err(SpecError::ShapeMismatch("magnitude squared takes a column vector".into()));
    }
    Ok(Tensor::from_fn(x.rows(), 1, DType::Real, |i, _| Acc::mag_sq(x.get(i, 0)).round())?)
}

/// Sum over rows m of row_m(A)^T row_m(B); a D x D result.
pub fn ref_outer_product(a: &Tensor, b: &Tensor) -> Result<Tensor, SpecError> {
    if a.shape() != b.shape() {
        return Err(SpecError::ShapeMismatch("outer product operands must share M x D".into()));
    }
    let d = a.cols();
    Ok(Tensor::from_fn(d, d, result_kind(a.kind(), b.kind()), |p, q| {
        let mut acc = Acc::ZERO;
        for m in 0..a.rows() {
            acc.mac(a.get(m, p), b.get(m, q))?;
        }
        acc.round()
    })?)
}

/// Forward substitution on the transposed triangular factor: iteration `j`
/// takes `x[j] = b[j] / a[j][j]` and then `b[i] -= a[j][i] * x[j]` for
/// `i > j`. Entries below the diagonal of `a` are ignored.
pub fn ref_trisolve(a: &FMatrix, b: &FMatrix) -> Result<FMatrix, SpecError> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n || b.cols() != 1 {
        return Err(SpecError::ShapeMismatch("trisolve needs N x N and N x 1".into()));
    }
    let mut rhs: Vec<f64> = b.data().to_vec();
    let mut x = vec![0.0; n];
    for j in 0..n {
        let pivot = a.get(j, j);
        if pivot.abs() < PIVOT_EPS {
            return Err(SpecError::Singular { index: j });
        }
        x[j] = rhs[j] / pivot;
        for i in (j + 1)..n {
            rhs[i] -= a.get(j, i) * x[j];
        }
    }
    Ok(FMatrix::new(n, 1, x)?)
}

/// Right-looking Cholesky on the upper triangle. Returns lower-triangular L
/// with L L^T = A.
pub fn ref_cholesky(a: &FMatrix) -> Result<FMatrix, SpecError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(SpecError::ShapeMismatch("cholesky needs a square matrix".into()));
    }
    let mut work = a.clone();
    let mut l = FMatrix::zeros(n, n);
    for k in 0..n {
        let akk = work.get(k, k);
        if !(akk > 0.0) {
            return Err(SpecError::NotPositiveDefinite { index: k });
        }
        let invsqr = 1.0 / akk.sqrt();
        let inv = 1.0 / akk;
        for i in k..n {
            l.set(i, k, invsqr * work.get(k, i));
        }
        for j in (k + 1)..n {
            let alpha = inv * work.get(k, j);
            for i in j..n {
                let updated = work.get(j, i) - alpha * work.get(k, i);
                work.set(j, i, updated);
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Scalar;

    fn real(rows: usize, cols: usize, vals: &[f64]) -> Tensor {
        Tensor::new(
            rows,
            cols,
            DType::Real,
            vals.iter().map(|v| CValue::real(Scalar::from_f64(*v).unwrap())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn matmul_hand_checked() {
        // [[1,2],[3,4]] [[5,6],[7,8]] = [[19,22],[43,50]], scaled by 2^-7 each side.
        let s = 1.0 / 128.0;
        let a = real(2, 2, &[1.0 * s, 2.0 * s, 3.0 * s, 4.0 * s]);
        let b = real(2, 2, &[5.0 * s, 6.0 * s, 7.0 * s, 8.0 * s]);
        let p = ref_matmul(&a, &b).unwrap();
        let expect = real(2, 2, &[19.0 * s * s, 22.0 * s * s, 43.0 * s * s, 50.0 * s * s]);
        assert_eq!(p, expect);
    }

    #[test]
    fn matmul_identity_is_exact() {
        let a = real(3, 2, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        // Closest representable "one" is 1 - 2^-15; use the power-of-two
        // half and compare against a halved A instead.
        let half = real(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let p = ref_matmul(&a, &half).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let v = a.get(i, j).re.raw() as i64;
                let expect = crate::numeric::round_shift_even(v << 14, 15);
                assert_eq!(p.get(i, j).re.raw() as i64, expect);
            }
        }
    }

    #[test]
    fn matvec_shape_errors() {
        let a = real(2, 2, &[0.0; 4]);
        let w = real(3, 1, &[0.0; 3]);
        assert!(ref_matvec(&a, &w).is_err());
        let zero = ref_matvec(&a, &real(2, 1, &[0.1, 0.2])).unwrap();
        assert!(zero.data().iter().all(|v| *v == CValue::ZERO));
    }

    #[test]
    fn conv_sliding_sum() {
        let x: Vec<f64> = (1..=8).map(|v| v as f64 / 64.0).collect();
        let x = real(8, 1, &x);
        let h = real(3, 1, &[0.5, 0.5, 0.5]);
        let y = ref_conv1d(&x, &h, 1, None).unwrap();
        assert_eq!(y.rows(), 6);
        for j in 0..6 {
            let expect = ((j + 1) + (j + 2) + (j + 3)) as f64 / 128.0;
            assert_eq!(y.get(j, 0).re.to_f64(), expect);
        }
        assert!(ref_conv1d(&x, &real(9, 1, &[0.0; 9]), 1, None).is_err());
        assert!(ref_conv1d(&x, &h, 0, None).is_err());
    }

    #[test]
    fn magsq_three_four_five() {
        let x = Tensor::new(1, 1, DType::Complex, vec![CValue::from_f64(0.375, 0.5).unwrap()]).unwrap();
        // (3/8)^2 + (4/8)^2 = 25/64
        assert_eq!(ref_vecmagsq(&x).unwrap().get(0, 0).re.to_f64(), 25.0 / 64.0);
    }

    #[test]
    fn trisolve_two_by_two() {
        let a = FMatrix::new(2, 2, vec![2.0, 1.0, 0.0, 4.0]).unwrap();
        let b = FMatrix::new(2, 1, vec![6.0, 10.0]).unwrap();
        let x = ref_trisolve(&a, &b).unwrap();
        assert_eq!(x.data(), &[3.0, 1.75]);
        let singular = FMatrix::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(ref_trisolve(&singular, &b), Err(SpecError::Singular { index: 0 })));
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = FMatrix::new(2, 2, vec![4.0, 2.0, 2.0, 5.0]).unwrap();
        let l = ref_cholesky(&a).unwrap();
        assert_eq!(l.data(), &[2.0, 0.0, 1.0, 2.0]);
        let not_pd = FMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(ref_cholesky(&not_pd), Err(SpecError::NotPositiveDefinite { index: 1 })));
        assert_eq!(ref_cholesky(&FMatrix::identity(4)).unwrap(), FMatrix::identity(4));
    }
}
