use crate::fabric::ArrayConfig;
use crate::numeric::count_ops;
use crate::oracle::KernelSpec;

use super::PerfError;

/// Compute-only minimum cycles: real multiplications over multipliers.
pub fn lower_bound(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<u64, PerfError> {
    let mults = count_ops(spec)?.real_mults;
    let units = cfg.pe_count() as u64;
    if units == 0 {
        return Err(PerfError::Invalid("array has no multipliers".into()));
    }
    Ok(mults.div_ceil(units))
}

/// Cycles needed just to read every operand word once through all banks.
/// A diagnostic only; it never enters the table lower bound.
pub fn memory_bound(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<u64, PerfError> {
    spec.validate()?;
    let words = |(r, c): (usize, usize), complex: bool| (r * c * if complex { 2 } else { 1 }) as u64;
    let mut units = words(spec.input_operand_shape(), spec.dtype_in.is_complex()) * spec.streams.max(1) as u64;
    if let Some(shape) = spec.weight_operand_shape() {
        units += words(shape, spec.dtype_w.is_complex());
    }
    let per_cycle = (cfg.cols * cfg.top_reads_per_cycle as usize + cfg.rows * cfg.left_reads_per_cycle as usize) as u64;
    if per_cycle == 0 {
        return Err(PerfError::Invalid("array has no read ports".into()));
    }
    Ok(units.div_ceil(per_cycle))
}

/// Percentage of the latency the multipliers would need at full occupancy.
pub fn utilization(lower_bound: u64, latency: u64) -> Result<f64, PerfError> {
    if lower_bound == 0 || latency < lower_bound {
        return Err(PerfError::LatencyBelowBound { latency, lower_bound });
    }
    Ok(100.0 * lower_bound as f64 / latency as f64)
}

/// Giga-operations per second.
pub fn throughput(ops: u64, latency: u64, clock_ghz: f64) -> f64 {
    if latency == 0 {
        return 0.0;
    }
    ops as f64 * clock_ghz / latency as f64
}
