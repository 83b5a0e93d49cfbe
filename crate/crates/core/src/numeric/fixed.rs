//! Q1.15 fixed-point scalars with an exact 64-bit accumulator.
//!
//! Products of two operands are kept exact in Q2.30 and summed in `i64`.
//! Rounding back to the operand grid happens once, on writeback, using
//! round-half-to-even.

use serde::{Deserialize, Serialize};

use super::NumericError;

/// Operand word width in bits.
pub const WORD_BITS: u32 = 16;
/// Fractional bits of the operand format.
pub const FRAC_BITS: u32 = 15;

const SCALE: f64 = (1u32 << FRAC_BITS) as f64;

/// A signed 16-bit fixed-point operand word in Q1.15.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scalar(i16);

impl Scalar {
    pub const ZERO: Scalar = Scalar(0);

    pub const fn from_raw(raw: i16) -> Self {
        Scalar(raw)
    }

    /// Builds a scalar from a raw integer of arbitrary width, rejecting
    /// values outside the 16-bit range instead of wrapping.
    pub fn try_from_raw(raw: i64) -> Result<Self, NumericError> {
        i16::try_from(raw)
            .map(Scalar)
            .map_err(|_| NumericError::Overflow { raw })
    }

    /// Quantizes a real number onto the Q1.15 grid (round-half-even).
    pub fn from_f64(x: f64) -> Result<Self, NumericError> {
        if !x.is_finite() {
            return Err(NumericError::NotFinite);
        }
        let scaled = x * SCALE;
        let rounded = scaled.round_ties_even();
        if rounded < i16::MIN as f64 || rounded > i16::MAX as f64 {
            return Err(NumericError::Overflow { raw: rounded as i64 });
        }
        Ok(Scalar(rounded as i16))
    }

    pub const fn raw(self) -> i16 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE
    }

    /// Smallest representable step.
    pub fn ulp() -> f64 {
        1.0 / SCALE
    }
}

/// A complex fixed-point value. Real-kind values carry `im == 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CValue {
    pub re: Scalar,
    pub im: Scalar,
}

impl CValue {
    pub const ZERO: CValue = CValue { re: Scalar::ZERO, im: Scalar::ZERO };

    pub const fn new(re: Scalar, im: Scalar) -> Self {
        CValue { re, im }
    }

    pub const fn real(re: Scalar) -> Self {
        CValue { re, im: Scalar::ZERO }
    }

    pub fn from_raw(re: i16, im: i16) -> Self {
        CValue::new(Scalar::from_raw(re), Scalar::from_raw(im))
    }

    pub fn from_f64(re: f64, im: f64) -> Result<Self, NumericError> {
        Ok(CValue::new(Scalar::from_f64(re)?, Scalar::from_f64(im)?))
    }

    pub fn conj(self) -> Result<Self, NumericError> {
        // -(-1.0) is not representable in Q1.15.
        let im = Scalar::try_from_raw(-(self.im.raw() as i64))?;
        Ok(CValue::new(self.re, im))
    }

    pub fn is_real(self) -> bool {
        self.im.raw() == 0
    }

    pub fn to_f64(self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

/// Extended-precision complex accumulator holding Q2.30 sums.
///
/// 2^20 full-scale complex products sum to at most 2^51 in magnitude, well
/// inside `i64`; `mac` still uses checked arithmetic so a broken caller
/// surfaces as an error rather than wrapping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Acc {
    pub re: i64,
    pub im: i64,
}

impl Acc {
    pub const ZERO: Acc = Acc { re: 0, im: 0 };

    /// Exact complex product in Q2.30.
    pub fn product(a: CValue, b: CValue) -> Acc {
        let (ar, ai) = (a.re.raw() as i64, a.im.raw() as i64);
        let (br, bi) = (b.re.raw() as i64, b.im.raw() as i64);
        Acc {
            re: ar * br - ai * bi,
            im: ar * bi + ai * br,
        }
    }

    /// |a|^2 in Q2.30, imaginary part zero.
    pub fn mag_sq(a: CValue) -> Acc {
        let (ar, ai) = (a.re.raw() as i64, a.im.raw() as i64);
        Acc { re: ar * ar + ai * ai, im: 0 }
    }

    pub fn add(self, other: Acc) -> Result<Acc, NumericError> {
        Ok(Acc {
            re: self.re.checked_add(other.re).ok_or(NumericError::AccumulatorOverflow)?,
            im: self.im.checked_add(other.im).ok_or(NumericError::AccumulatorOverflow)?,
        })
    }

    pub fn sub(self, other: Acc) -> Result<Acc, NumericError> {
        Ok(Acc {
            re: self.re.checked_sub(other.re).ok_or(NumericError::AccumulatorOverflow)?,
            im: self.im.checked_sub(other.im).ok_or(NumericError::AccumulatorOverflow)?,
        })
    }

    pub fn mac(&mut self, a: CValue, b: CValue) -> Result<(), NumericError> {
        *self = self.add(Acc::product(a, b))?;
        Ok(())
    }

    /// Rounds back to the operand grid. Fails if the result does not fit.
    pub fn round(self) -> Result<CValue, NumericError> {
        Ok(CValue::new(
            Scalar::try_from_raw(round_shift_even(self.re, FRAC_BITS))?,
            Scalar::try_from_raw(round_shift_even(self.im, FRAC_BITS))?,
        ))
    }
}

/// Arithmetic right shift by `shift` bits with round-half-to-even.
pub fn round_shift_even(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift);
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Complex product rounded to the operand grid.
pub fn cmul(a: CValue, b: CValue) -> Result<CValue, NumericError> {
    Acc::product(a, b).round()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> CValue {
        CValue::from_f64(re, im).unwrap()
    }

    #[test]
    fn round_half_even_cases() {
        assert_eq!(round_shift_even(3, 1), 2); // 1.5 -> 2
        assert_eq!(round_shift_even(5, 1), 2); // 2.5 -> 2
        assert_eq!(round_shift_even(-3, 1), -2); // -1.5 -> -2
        assert_eq!(round_shift_even(-5, 1), -2); // -2.5 -> -2
        assert_eq!(round_shift_even(7, 2), 2); // 1.75 -> 2
        assert_eq!(round_shift_even(-7, 2), -2);
    }

    #[test]
    fn construction_rejects_overflow() {
        assert!(Scalar::from_f64(1.0).is_err());
        assert!(Scalar::from_f64(-1.0).is_ok());
        assert!(Scalar::try_from_raw(40_000).is_err());
        assert!(Scalar::from_f64(f64::NAN).is_err());
    }

    #[test]
    fn multiplicative_identity() {
        // 1.0 is not representable; the largest value times x stays within 1 ulp of x.
        let one = CValue::from_raw(i16::MAX, 0);
        let x = c(0.25, -0.5);
        let p = cmul(one, x).unwrap();
        assert!((p.re.raw() - x.re.raw()).abs() <= 1);
        assert!((p.im.raw() - x.im.raw()).abs() <= 1);
        // With an exact power-of-two scale the identity holds exactly.
        let half = c(0.5, 0.0);
        assert_eq!(cmul(half, c(0.5, 0.25)).unwrap(), c(0.25, 0.125));
    }

    #[test]
    fn i_squared_is_minus_one() {
        // (0, -1) * (0, -1) = -1 exactly in Q1.15.
        let mi = CValue::from_raw(0, i16::MIN);
        assert_eq!(cmul(mi, mi).unwrap(), CValue::from_raw(i16::MIN, 0));
        // Half-scale: (0, 0.5)^2 = -0.25.
        let hi = c(0.0, 0.5);
        assert_eq!(cmul(hi, hi).unwrap(), c(-0.25, 0.0));
    }

    #[test]
    fn minus_one_squared_overflows() {
        let m = CValue::from_raw(i16::MIN, 0);
        assert!(matches!(cmul(m, m), Err(NumericError::Overflow { .. })));
    }

    #[test]
    fn accumulator_headroom() {
        let m = CValue::from_raw(i16::MIN, i16::MIN);
        let mut acc = Acc::ZERO;
        for _ in 0..(1 << 20) {
            acc.mac(m, m).unwrap();
        }
        assert!(acc.im > 0);
    }

    #[test]
    fn conj_of_min_fails() {
        assert!(CValue::from_raw(0, i16::MIN).conj().is_err());
        assert_eq!(c(0.5, 0.25).conj().unwrap(), c(0.5, -0.25));
    }
}
