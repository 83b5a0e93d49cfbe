use crate::fabric::{ArrayConfig, MacMode, MacOperand, RegionRole, Schedule, Src};
use crate::oracle::KernelSpec;

use super::builder::Builder;
use super::{region, standard_layout, MapError};

/// `|x_i|^2` element-wise: blocks of `rows` samples are shifted into a
/// column from the top and squared in place, columns taking blocks in turn.
pub(crate) fn map_vecmagsq(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let layout = standard_layout(spec);
    let (x, o) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Output));
    let mut b = Builder::new(cfg, layout);
    let n = spec.input_shape.0;
    let complex = spec.dtype_in.is_complex();
    let lat = cfg.mac_latency.get(complex, complex) as u64;
    let r = cfg.rows;

    // Per column: first cycle a new injection may start, and when the
    // multipliers are free again.
    let mut cursor = vec![0u64; cfg.cols];
    let mut free = vec![0u64; cfg.cols];
    for (blk, start) in (0..n).step_by(r).enumerate() {
        let col = blk % cfg.cols;
        let z = r.min(n - start);
        let mut t = cursor[col];
        // Last sample first so that sample `start + i` ends on row `i`.
        for i in (0..z).rev() {
            let src = Src::Mem(x.addr(start + i, 0));
            while !b.inject_down_fits(col, src, t) {
                t += 1;
            }
            b.inject_down(col, src, t);
            t += 1;
        }
        let fire = t.max(free[col]);
        b.fire(fire, col, 0, z, MacOperand::SelfConj, MacMode::ElementWise { addr: o.addr(start, 0) });
        free[col] = fire + lat;
        cursor[col] = fire;
    }
    Ok(b.finish())
}
