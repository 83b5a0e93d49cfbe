use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numeric::DType;

use super::SpecError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    MatVec,
    MatMul,
    Conv1D,
    Fir,
    #[serde(rename = "matched_filter")]
    MatchedFilter,
    VecMagSq,
    #[serde(rename = "outer_product")]
    OuterProduct,
    TriSolve,
    Cholesky,
}

impl KernelKind {
    pub const ALL: [KernelKind; 9] = [
        KernelKind::MatVec,
        KernelKind::MatMul,
        KernelKind::Conv1D,
        KernelKind::Fir,
        KernelKind::MatchedFilter,
        KernelKind::VecMagSq,
        KernelKind::OuterProduct,
        KernelKind::TriSolve,
        KernelKind::Cholesky,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::MatVec => "matvec",
            KernelKind::MatMul => "matmul",
            KernelKind::Conv1D => "conv1d",
            KernelKind::Fir => "fir",
            KernelKind::MatchedFilter => "matched_filter",
            KernelKind::VecMagSq => "vecmagsq",
            KernelKind::OuterProduct => "outer_product",
            KernelKind::TriSolve => "trisolve",
            KernelKind::Cholesky => "cholesky",
        }
    }

    /// Kernels whose datapath runs in double precision.
    pub fn is_float(self) -> bool {
        matches!(self, KernelKind::TriSolve | KernelKind::Cholesky)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "matvec" | "mv" => KernelKind::MatVec,
            "matmul" | "mm" | "gemm" => KernelKind::MatMul,
            "conv1d" | "conv" => KernelKind::Conv1D,
            "fir" => KernelKind::Fir,
            "matched_filter" | "matchedfilter" | "mf" => KernelKind::MatchedFilter,
            "vecmagsq" | "magsq" => KernelKind::VecMagSq,
            "outer_product" | "outerproduct" | "outer" => KernelKind::OuterProduct,
            "trisolve" | "triangle_solve" => KernelKind::TriSolve,
            "cholesky" => KernelKind::Cholesky,
            other => return Err(SpecError::Invalid(format!("unknown kernel `{other}`"))),
        };
        Ok(k)
    }
}

/// A benchmark instance: kernel kind plus operand shapes and types.
///
/// Shape conventions per kind (rows, cols):
///
/// | kind           | input        | weight      |
/// |----------------|--------------|-------------|
/// | MatVec         | (M, K)       | (K, 1)      |
/// | MatMul         | (M, K)       | (K, N)      |
/// | Conv1D, Fir    | (N, 1)       | (K, C_out)  |
/// | MatchedFilter  | (N, 1)/stream| (K, 1)      |
/// | VecMagSq       | (N, 1)       | (N, 1)      |
/// | OuterProduct   | (M, D)       | (M, D)      |
/// | TriSolve       | (N, N)       | (N, 1) rhs  |
/// | Cholesky       | (N, N)       | (N, N)      |
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub input_shape: (usize, usize),
    pub weight_shape: (usize, usize),
    pub dtype_in: DType,
    pub dtype_w: DType,
    pub stride: usize,
    pub streams: usize,
    pub window_count_override: Option<usize>,
}

impl KernelSpec {
    fn base(kind: KernelKind, input: (usize, usize), weight: (usize, usize), dt_in: DType, dt_w: DType) -> Self {
        KernelSpec {
            kind,
            input_shape: input,
            weight_shape: weight,
            dtype_in: dt_in,
            dtype_w: dt_w,
            stride: 1,
            streams: 1,
            window_count_override: None,
        }
    }

    pub fn matvec(m: usize, k: usize, dtype: DType) -> Self {
        Self::base(KernelKind::MatVec, (m, k), (k, 1), dtype, dtype)
    }

    pub fn matmul(m: usize, k: usize, n: usize, dtype: DType) -> Self {
        Self::base(KernelKind::MatMul, (m, k), (k, n), dtype, dtype)
    }

    pub fn fir(n: usize, taps: usize, dtype: DType) -> Self {
        Self::base(KernelKind::Fir, (n, 1), (taps, 1), dtype, dtype)
    }

    pub fn conv1d(n: usize, taps: usize, out_channels: usize, stride: usize, dtype: DType) -> Self {
        let mut s = Self::base(KernelKind::Conv1D, (n, 1), (taps, out_channels), dtype, dtype);
        s.stride = stride;
        s
    }

    pub fn matched_filter(n: usize, taps: usize, streams: usize) -> Self {
        let mut s = Self::base(KernelKind::MatchedFilter, (n, 1), (taps, 1), DType::Complex, DType::Complex);
        s.streams = streams;
        s
    }

    pub fn vecmagsq(n: usize, dtype: DType) -> Self {
        Self::base(KernelKind::VecMagSq, (n, 1), (n, 1), dtype, dtype)
    }

    pub fn outer_product(m: usize, d: usize, dtype: DType) -> Self {
        Self::base(KernelKind::OuterProduct, (m, d), (m, d), dtype, dtype)
    }

    pub fn trisolve(n: usize) -> Self {
        Self::base(KernelKind::TriSolve, (n, n), (n, 1), DType::Real, DType::Real)
    }

    pub fn cholesky(n: usize) -> Self {
        Self::base(KernelKind::Cholesky, (n, n), (n, n), DType::Real, DType::Real)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_windows(mut self, windows: usize) -> Self {
        self.window_count_override = Some(windows);
        self
    }

    pub fn with_dtypes(mut self, dtype_in: DType, dtype_w: DType) -> Self {
        self.dtype_in = dtype_in;
        self.dtype_w = dtype_w;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let (ir, ic) = self.input_shape;
        let (wr, wc) = self.weight_shape;
        if ir == 0 || ic == 0 || wr == 0 || wc == 0 {
            return Err(SpecError::Invalid(format!(
                "shapes must be positive, got input {ir}x{ic}, weight {wr}x{wc}"
            )));
        }
        if self.stride == 0 {
            return Err(SpecError::Invalid("stride must be at least 1".into()));
        }
        if self.streams == 0 {
            return Err(SpecError::Invalid("streams must be at least 1".into()));
        }
        let shape_err = |what: &str| Err(SpecError::ShapeMismatch(format!("{}: {what}", self.kind)));
        match self.kind {
            KernelKind::MatVec => {
                if wr != ic || wc != 1 {
                    return shape_err("weight must be (input cols, 1)");
                }
            }
            KernelKind::MatMul => {
                if wr != ic {
                    return shape_err("weight rows must equal input cols");
                }
            }
            KernelKind::Conv1D | KernelKind::Fir => {
                if ic != 1 {
                    return shape_err("input must be a column vector");
                }
                if self.kind == KernelKind::Fir && wc != 1 {
                    return shape_err("FIR has a single filter");
                }
                if wr > ir {
                    return Err(SpecError::FilterTooLong { taps: wr, len: ir });
                }
            }
            KernelKind::MatchedFilter => {
                if ic != 1 || wc != 1 {
                    return shape_err("input and template must be column vectors");
                }
                if self.stride != 1 {
                    return shape_err("stride must be 1");
                }
            }
            KernelKind::VecMagSq => {
                if ic != 1 || self.weight_shape != self.input_shape {
                    return shape_err("input must be a column vector mirrored by the weight shape");
                }
            }
            KernelKind::OuterProduct => {
                if self.input_shape != self.weight_shape {
                    return shape_err("A and B must both be M x D");
                }
            }
            KernelKind::TriSolve => {
                if ir != ic || wr != ir || wc != 1 {
                    return shape_err("A must be N x N and b N x 1");
                }
            }
            KernelKind::Cholesky => {
                if ir != ic || self.weight_shape != self.input_shape {
                    return shape_err("A must be square");
                }
            }
        }
        if self.kind.is_float() && (self.dtype_in != DType::Real || self.dtype_w != DType::Real) {
            return Err(SpecError::Invalid(format!("{} runs on real double-precision data", self.kind)));
        }
        if let Some(w) = self.window_count_override {
            if !matches!(self.kind, KernelKind::Conv1D | KernelKind::Fir | KernelKind::MatchedFilter) {
                return Err(SpecError::Invalid("window count override only applies to convolutions".into()));
            }
            let natural = self.natural_window_count();
            if w == 0 || w > natural {
                return Err(SpecError::Invalid(format!(
                    "window count override {w} outside 1..={natural}"
                )));
            }
        }
        Ok(())
    }

    /// Number of output windows per stream before any override: valid
    /// cross-correlation for Conv1D/FIR, N + 1 lags for the matched filter
    /// (the input is padded with K zeros).
    pub fn natural_window_count(&self) -> usize {
        let n = self.input_shape.0;
        let k = self.weight_shape.0;
        match self.kind {
            KernelKind::MatchedFilter => n + 1,
            _ if k > n => 0,
            _ => (n - k) / self.stride + 1,
        }
    }

    /// Scheduled windows per stream.
    pub fn window_count(&self) -> usize {
        self.window_count_override.unwrap_or_else(|| self.natural_window_count())
    }

    pub fn taps(&self) -> usize {
        self.weight_shape.0
    }

    pub fn out_channels(&self) -> usize {
        self.weight_shape.1
    }

    /// Shape of the operand tensor actually fed to the kernel.
    pub fn input_operand_shape(&self) -> (usize, usize) {
        match self.kind {
            KernelKind::MatchedFilter => (self.input_shape.0, self.streams),
            _ => self.input_shape,
        }
    }

    /// Shape of the weight operand, `None` when the kernel has none.
    pub fn weight_operand_shape(&self) -> Option<(usize, usize)> {
        match self.kind {
            KernelKind::VecMagSq | KernelKind::Cholesky => None,
            _ => Some(self.weight_shape),
        }
    }

    pub fn output_shape(&self) -> (usize, usize) {
        let (ir, ic) = self.input_shape;
        let (_, wc) = self.weight_shape;
        match self.kind {
            KernelKind::MatVec => (ir, 1),
            KernelKind::MatMul => (ir, wc),
            KernelKind::Conv1D | KernelKind::Fir => (self.window_count(), wc),
            KernelKind::MatchedFilter => (self.window_count(), self.streams),
            KernelKind::VecMagSq => (ir, 1),
            KernelKind::OuterProduct => (ic, ic),
            KernelKind::TriSolve => (ir, 1),
            KernelKind::Cholesky => (ir, ir),
        }
    }

    /// Output element type of the fixed-point kernels.
    pub fn output_dtype(&self) -> DType {
        match self.kind {
            KernelKind::VecMagSq => DType::Real,
            KernelKind::MatchedFilter => DType::Complex,
            _ if self.dtype_in.is_complex() || self.dtype_w.is_complex() => DType::Complex,
            _ => DType::Real,
        }
    }

    /// Products summed into a single output element.
    pub fn terms_per_output(&self) -> usize {
        match self.kind {
            KernelKind::MatVec | KernelKind::MatMul => self.input_shape.1,
            KernelKind::Conv1D | KernelKind::Fir | KernelKind::MatchedFilter => self.taps(),
            KernelKind::VecMagSq => 1,
            KernelKind::OuterProduct => self.input_shape.0,
            KernelKind::TriSolve | KernelKind::Cholesky => self.input_shape.0,
        }
    }

    /// Stable identifier used for report file names and baseline keys.
    pub fn key(&self) -> String {
        let (ir, ic) = self.input_shape;
        let (wr, wc) = self.weight_shape;
        let mut key = format!(
            "{}_{}x{}_{}x{}_{}-{}",
            self.kind, ir, ic, wr, wc, self.dtype_in, self.dtype_w
        );
        if self.stride != 1 {
            key.push_str(&format!("_s{}", self.stride));
        }
        if self.streams != 1 {
            key.push_str(&format!("_x{}", self.streams));
        }
        if let Some(w) = self.window_count_override {
            key.push_str(&format!("_w{w}"));
        }
        key
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_kinds() {
        for k in KernelKind::ALL {
            assert_eq!(k.as_str().parse::<KernelKind>().unwrap(), k);
        }
        assert!("fft".parse::<KernelKind>().is_err());
    }

    #[test]
    fn window_counts() {
        let fir = KernelSpec::fir(1024, 32, DType::Real);
        assert_eq!(fir.window_count(), 993);
        assert_eq!(fir.clone().with_windows(448).window_count(), 448);
        assert!(fir.clone().with_windows(994).validate().is_err());
        let conv = KernelSpec::conv1d(8, 3, 1, 1, DType::Real);
        assert_eq!(conv.window_count(), 6);
        assert_eq!(KernelSpec::conv1d(10, 3, 1, 2, DType::Real).window_count(), 4);
        assert_eq!(KernelSpec::matched_filter(1024, 32, 1).window_count(), 1025);
    }

    #[test]
    fn validation() {
        assert!(KernelSpec::matmul(0, 4, 8, DType::Real).validate().is_err());
        assert!(KernelSpec::matmul(4, 4, 8, DType::Real).validate().is_ok());
        let mut bad = KernelSpec::matvec(4, 4, DType::Real);
        bad.weight_shape = (3, 1);
        assert!(matches!(bad.validate(), Err(SpecError::ShapeMismatch(_))));
        assert!(KernelSpec::fir(8, 16, DType::Real).validate().is_err());
        assert!(KernelSpec::conv1d(8, 2, 1, 0, DType::Real).validate().is_err());
        let mut tri = KernelSpec::trisolve(4);
        tri.dtype_in = DType::Complex;
        assert!(tri.validate().is_err());
    }

    #[test]
    fn keys_are_distinct() {
        let a = KernelSpec::matched_filter(1024, 32, 1).key();
        let b = KernelSpec::matched_filter(1024, 32, 8).key();
        assert_ne!(a, b);
        assert_eq!(KernelSpec::matmul(1024, 4, 8, DType::Real).key(), "matmul_1024x4_4x8_real-real");
    }
}
