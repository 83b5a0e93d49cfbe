//! Golden reference kernels, kernel descriptions and test-vector generation.

mod reference;
mod spec;
mod vectors;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{FMatrix, NumericError, Tensor};

pub use reference::{
    ref_cholesky, ref_conv1d, ref_matched_filter, ref_matmul, ref_matvec, ref_outer_product, ref_trisolve,
    ref_vecmagsq,
};
pub use spec::{KernelKind, KernelSpec};
pub use vectors::generate_operands;

/// Relative tolerance for the double-precision kernels.
pub const FLOAT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("invalid kernel spec: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("filter of {taps} taps is longer than the {len}-sample input")]
    FilterTooLong { taps: usize, len: usize },
    #[error("singular matrix: pivot {index} is zero")]
    Singular { index: usize },
    #[error("matrix is not positive definite at pivot {index}")]
    NotPositiveDefinite { index: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Fixed(Tensor),
    Float(FMatrix),
}

impl Operand {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Operand::Fixed(t) => t.shape(),
            Operand::Float(m) => m.shape(),
        }
    }

    pub fn fixed(&self) -> Option<&Tensor> {
        match self {
            Operand::Fixed(t) => Some(t),
            Operand::Float(_) => None,
        }
    }

    pub fn float(&self) -> Option<&FMatrix> {
        match self {
            Operand::Float(m) => Some(m),
            Operand::Fixed(_) => None,
        }
    }
}

/// The operand set of one kernel invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Operands {
    pub input: Operand,
    pub weight: Option<Operand>,
}

impl Operands {
    pub fn fixed(input: Tensor, weight: Option<Tensor>) -> Self {
        Operands { input: Operand::Fixed(input), weight: weight.map(Operand::Fixed) }
    }

    pub fn float(input: FMatrix, weight: Option<FMatrix>) -> Self {
        Operands { input: Operand::Float(input), weight: weight.map(Operand::Float) }
    }

    fn fixed_pair(&self) -> Result<(&Tensor, Option<&Tensor>), SpecError> {
        let input = self.input.fixed().ok_or_else(|| SpecError::Invalid("expected fixed-point input".into()))?;
        let weight = match &self.weight {
            Some(w) => Some(w.fixed().ok_or_else(|| SpecError::Invalid("expected fixed-point weight".into()))?),
            None => None,
        };
        Ok((input, weight))
    }

    fn float_pair(&self) -> Result<(&FMatrix, Option<&FMatrix>), SpecError> {
        let input = self.input.float().ok_or_else(|| SpecError::Invalid("expected float input".into()))?;
        let weight = match &self.weight {
            Some(w) => Some(w.float().ok_or_else(|| SpecError::Invalid("expected float weight".into()))?),
            None => None,
        };
        Ok((input, weight))
    }

    /// Checks operand shapes and element types against the spec.
    pub fn check(&self, spec: &KernelSpec) -> Result<(), SpecError> {
        spec.validate()?;
        if self.input.shape() != spec.input_operand_shape() {
            return Err(SpecError::ShapeMismatch(format!(
                "input operand is {:?}, spec wants {:?}",
                self.input.shape(),
                spec.input_operand_shape()
            )));
        }
        match (spec.weight_operand_shape(), &self.weight) {
            (Some(s), Some(w)) if w.shape() == s => {}
            (None, None) => {}
            (want, got) => {
                return Err(SpecError::ShapeMismatch(format!(
                    "weight operand {:?}, spec wants {:?}",
                    got.as_ref().map(Operand::shape),
                    want
                )))
            }
        }
        if spec.kind.is_float() {
            self.float_pair()?;
        } else {
            let (i, w) = self.fixed_pair()?;
            if i.kind() != spec.dtype_in {
                return Err(SpecError::ShapeMismatch(format!("input is {}, spec says {}", i.kind(), spec.dtype_in)));
            }
            if let Some(w) = w {
                if w.kind() != spec.dtype_w {
                    return Err(SpecError::ShapeMismatch(format!("weight is {}, spec says {}", w.kind(), spec.dtype_w)));
                }
            }
        }
        Ok(())
    }
}

/// Result of a kernel: fixed-point tensor or double-precision matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Output {
    Fixed(Tensor),
    Float(FMatrix),
}

impl Output {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Output::Fixed(t) => t.shape(),
            Output::Float(m) => m.shape(),
        }
    }

    /// Bit-exact equality for fixed point, `FLOAT_REL_TOL` relative to the
    /// max-abs of `expected` for floating point.
    pub fn matches(&self, expected: &Output) -> bool {
        match (self, expected) {
            (Output::Fixed(a), Output::Fixed(b)) => a == b,
            (Output::Float(a), Output::Float(b)) => {
                a.shape() == b.shape() && a.max_abs_diff(b) <= FLOAT_REL_TOL * b.max_abs().max(f64::MIN_POSITIVE)
            }
            _ => false,
        }
    }

    /// Largest absolute element difference (fixed point compared in raw units).
    pub fn max_abs_diff(&self, other: &Output) -> Option<f64> {
        match (self, other) {
            (Output::Fixed(a), Output::Fixed(b)) if a.shape() == b.shape() => Some(
                a.data()
                    .iter()
                    .zip(b.data())
                    .map(|(x, y)| {
                        let dr = (x.re.raw() as i32 - y.re.raw() as i32).abs();
                        let di = (x.im.raw() as i32 - y.im.raw() as i32).abs();
                        dr.max(di) as f64
                    })
                    .fold(0.0, f64::max),
            ),
            (Output::Float(a), Output::Float(b)) if a.shape() == b.shape() => Some(a.max_abs_diff(b)),
            _ => None,
        }
    }
}

/// Runs the golden model for `spec` on `operands`.
pub fn reference(spec: &KernelSpec, operands: &Operands) -> Result<Output, SpecError> {
    operands.check(spec)?;
    if spec.kind.is_float() {
        let (a, b) = operands.float_pair()?;
        return Ok(Output::Float(match spec.kind {
            KernelKind::TriSolve => ref_trisolve(a, b.expect("checked"))?,
            _ => ref_cholesky(a)?,
        }));
    }
    let (x, w) = operands.fixed_pair()?;
    let out = match spec.kind {
        KernelKind::MatVec => ref_matvec(x, w.expect("checked"))?,
        KernelKind::MatMul => ref_matmul(x, w.expect("checked"))?,
        KernelKind::Conv1D | KernelKind::Fir => {
            ref_conv1d(x, w.expect("checked"), spec.stride, spec.window_count_override)?
        }
        KernelKind::MatchedFilter => ref_matched_filter(x, w.expect("checked"), spec.window_count_override)?,
        KernelKind::VecMagSq => ref_vecmagsq(x)?,
        KernelKind::OuterProduct => ref_outer_product(x, w.expect("checked"))?,
        KernelKind::TriSolve | KernelKind::Cholesky => unreachable!("float kernels handled above"),
    };
    Ok(Output::Fixed(out))
}
