use crate::fabric::{ArrayConfig, MacMode, MacOperand, RegionRole, Schedule, Src};
use crate::oracle::KernelSpec;

use super::builder::Builder;
use super::{region, standard_layout, MapError};

/// `y = A w`: every column holds `w` (stacked as often as it fits), rows of
/// `A` are dealt to columns in turn and shifted in from the top banks.
pub(crate) fn map_matvec(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let layout = standard_layout(spec);
    let (a, w, o) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Weight), region(&layout, RegionRole::Output));
    let mut b = Builder::new(cfg, layout);
    let (m, k) = spec.input_shape;
    let (r, c, depth) = (cfg.rows, cfg.cols, cfg.pe_buffer_depth);
    let lat = cfg.mac_latency.get(spec.dtype_in.is_complex(), spec.dtype_w.is_complex()) as u64;

    let (copies, seg_rows) = if k <= r { (r / k, k) } else { (1, r) };
    let k_tiles = k.div_ceil(seg_rows);
    let passes: Vec<std::ops::Range<usize>> = (0..k_tiles).step_by(depth).map(|s| s..(s + depth).min(k_tiles)).collect();
    if passes.len() > 1 {
        b.note(format!("weight vector needs {k_tiles} slots, run in {} passes", passes.len()));
    }
    let tile_rows = |kt: usize| if copies > 1 { k } else { (k - kt * r).min(r) };

    let mut cursor = vec![0u64; c];
    let mut free = vec![0u64; c];
    let mut last_drain = vec![0u64; c];
    for (pi, pass) in passes.iter().enumerate() {
        let last_pass = pi + 1 == passes.len();
        for col in 0..c.min(m) {
            // Reload only once every lane of the previous pass has drained.
            let earliest = if pi == 0 { 0 } else { last_drain[col] };
            let mut landed = earliest;
            for kt in pass.clone() {
                for cp in 0..copies {
                    for rho in 0..tile_rows(kt) {
                        let kk = if copies > 1 { rho } else { kt * r + rho };
                        let row = cp * seg_rows + rho;
                        landed = landed.max(b.load_weight(col, row, kt - pass.start, w.addr(kk, 0), false, earliest));
                    }
                }
            }
            cursor[col] = cursor[col].max(earliest);
            free[col] = free[col].max(landed + 1);
        }

        let rows_of: Vec<Vec<usize>> = (0..c).map(|col| (col..m).step_by(c).collect()).collect();
        for (col, mine) in rows_of.iter().enumerate() {
            for chunk in mine.chunks(copies) {
                let lanes: Vec<u32> = chunk.iter().map(|_| b.lane()).collect();
                for kt in pass.clone() {
                    let rows = tile_rows(kt);
                    let z = (chunk.len() - 1) * seg_rows + rows;
                    let mut t = cursor[col];
                    // Deepest row first so row `cp * seg_rows + rho` gets element `rho`.
                    for pos in (0..z).rev() {
                        let (cp, rho) = (pos / seg_rows, pos % seg_rows);
                        let kk = if copies > 1 { rho } else { kt * r + rho };
                        let src = Src::Mem(a.addr(chunk[cp], kk));
                        while !b.inject_down_fits(col, src, t) {
                            t += 1;
                        }
                        b.inject_down(col, src, t);
                        t += 1;
                    }
                    let fire = t.max(free[col]);
                    for (cp, lane) in lanes.iter().enumerate() {
                        b.fire(fire, col, cp * seg_rows, rows, MacOperand::Slot((kt - pass.start) as u8), MacMode::Accumulate { lane: *lane });
                    }
                    free[col] = fire + lat;
                    cursor[col] = fire;
                    if kt + 1 == pass.end {
                        for (cp, (&row_m, &lane)) in chunk.iter().zip(&lanes).enumerate() {
                            let seg = cp * seg_rows;
                            let ready = fire + lat + (r - 1 - seg) as u64;
                            let d = b.drain(col, seg, lane, row_m as u32, ready);
                            last_drain[col] = last_drain[col].max(d);
                            if last_pass {
                                b.write(col, 1, seg, row_m as u32, o.addr(row_m, 0), d + 1);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(b.finish())
}
