use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numeric::{CValue, DType, FMatrix, Scalar, Tensor};

use super::{KernelKind, KernelSpec, Operands, SpecError};

/// Peak operand amplitude (in raw units) such that `terms` accumulated
/// products cannot leave the Q1.15 range after rounding.
fn amplitude(terms: usize, complex: bool) -> i16 {
    let t = terms.max(1) as f64;
    let a = if complex { 0.9 / (2.0 * t).sqrt() } else { 0.9 / t.sqrt() };
    ((a * 32768.0).floor() as i16).max(1)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, kind: DType, amp: i16) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let re = Scalar::from_raw(rng.gen_range(-amp..=amp));
            let im = match kind {
                DType::Real => Scalar::ZERO,
                DType::Complex => Scalar::from_raw(rng.gen_range(-amp..=amp)),
            };
            CValue::new(re, im)
        })
        .collect();
    Tensor::new(rows, cols, kind, data).expect("generated data matches shape")
}

/// Deterministic random operands for `spec`, scaled so that no output can
/// overflow the operand word.
pub fn generate_operands(spec: &KernelSpec, seed: u64) -> Result<Operands, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        KernelKind::TriSolve => {
            let n = spec.input_shape.0;
            let off = 0.5 / (n as f64).sqrt();
            let a = FMatrix::from_fn(n, n, |r, c| {
                if r == c {
                    let mag = rng.gen_range(1.0..2.0);
                    if rng.gen_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                } else if c > r {
                    rng.gen_range(-off..off)
                } else {
                    0.0
                }
            });
            let b = FMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
            Ok(Operands::float(a, Some(b)))
        }
        KernelKind::Cholesky => {
            let n = spec.input_shape.0;
            let m = FMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let mut a = m.transpose().matmul(&m);
            for i in 0..n {
                a.set(i, i, a.get(i, i) + n as f64);
            }
            Ok(Operands::float(a, None))
        }
        _ => {
            let complex = spec.dtype_in.is_complex() || spec.dtype_w.is_complex();
            let amp = amplitude(spec.terms_per_output(), complex);
            let (ir, ic) = spec.input_operand_shape();
            let input = random_tensor(&mut rng, ir, ic, spec.dtype_in, amp);
            let weight = spec
                .weight_operand_shape()
                .map(|(wr, wc)| random_tensor(&mut rng, wr, wc, spec.dtype_w, amp));
            Ok(Operands::fixed(input, weight))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::reference;

    #[test]
    fn deterministic() {
        let spec = KernelSpec::matmul(16, 4, 8, DType::Complex);
        assert_eq!(generate_operands(&spec, 7).unwrap(), generate_operands(&spec, 7).unwrap());
        assert_ne!(generate_operands(&spec, 7).unwrap(), generate_operands(&spec, 8).unwrap());
    }

    #[test]
    fn full_scale_outputs_do_not_overflow() {
        for spec in [
            KernelSpec::matvec(64, 16, DType::Complex),
            KernelSpec::matmul(32, 16, 16, DType::Real),
            KernelSpec::fir(256, 32, DType::Complex),
            KernelSpec::matched_filter(128, 32, 2),
            KernelSpec::vecmagsq(64, DType::Complex),
            KernelSpec::outer_product(1024, 4, DType::Complex),
        ] {
            for seed in 0..4 {
                let ops = generate_operands(&spec, seed).unwrap();
                reference(&spec, &ops).unwrap();
            }
        }
    }

    #[test]
    fn float_operands_are_well_posed() {
        let ops = generate_operands(&KernelSpec::cholesky(16), 1).unwrap();
        reference(&KernelSpec::cholesky(16), &ops).unwrap();
        let ops = generate_operands(&KernelSpec::trisolve(16), 1).unwrap();
        reference(&KernelSpec::trisolve(16), &ops).unwrap();
    }
}
