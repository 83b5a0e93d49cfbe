//! Fixed-point arithmetic, operand containers and operation counting.

mod count;
mod fixed;
mod tensor;

use thiserror::Error;

pub use count::{count_ops, mults_per_mac, OpCount};
pub use fixed::{cmul, round_shift_even, Acc, CValue, Scalar, FRAC_BITS, WORD_BITS};
pub use tensor::{DType, FMatrix, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("value {raw} does not fit a {WORD_BITS}-bit operand word")]
    Overflow { raw: i64 },
    #[error("extended accumulator overflow")]
    AccumulatorOverflow,
    #[error("non-finite value cannot be quantized")]
    NotFinite,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
}
