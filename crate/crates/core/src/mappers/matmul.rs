use std::collections::HashMap;

use crate::fabric::{ArrayConfig, MacMode, MacOperand, RegionRole, Schedule, Src};
use crate::oracle::KernelSpec;

use super::builder::Builder;
use super::tiles::plan_tiles;
use super::{region, standard_layout, MapError};

/// Addressing of an `M x K` by `K x N` product laid over arbitrary memory.
pub(crate) struct Gemm<'f> {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub in_complex: bool,
    pub w_complex: bool,
    pub conj_weight: bool,
    pub input: &'f dyn Fn(usize, usize) -> Src,
    pub weight: &'f dyn Fn(usize, usize) -> u32,
    pub output: &'f dyn Fn(usize, usize) -> u32,
}

/// Weight-stationary GEMM: weight tiles sit in PE slots, input rows stream
/// in from the left banks and march right one column per period, and each
/// column reduces down its rows into the accumulators.
pub(crate) fn emit_gemm(b: &mut Builder, g: &Gemm) {
    let cfg = b.cfg;
    let (r, c) = (cfg.rows, cfg.cols);
    let plan = plan_tiles(g.k, g.n, cfg);
    let lat = cfg.mac_latency.get(g.in_complex, g.w_complex) as u64;
    let in_units = if g.in_complex { 2u64 } else { 1 };
    let read_cycles = in_units.div_ceil(cfg.left_reads_per_cycle as u64);
    let period = (plan.max_group_width() as u64 * lat).max(read_cycles);
    let batches = g.m.div_ceil(plan.copies);
    let live_cols = c.min(g.n);

    if plan.groups.len() > 1 {
        b.note(format!(
            "weights exceed the slot buffers: {} tile groups double-buffered in halves of {}",
            plan.groups.len(),
            cfg.pe_buffer_depth / plan.buffers
        ));
    }

    // One injection per (group, batch, k tile).
    let mut injections = Vec::new();
    let mut first_q = Vec::with_capacity(plan.groups.len());
    let mut last_q = Vec::with_capacity(plan.groups.len());
    for (gi, grp) in plan.groups.iter().enumerate() {
        first_q.push(injections.len());
        for batch in 0..batches {
            for kt in grp.k_tiles.clone() {
                injections.push((gi, batch, kt));
            }
        }
        last_q.push(injections.len() - 1);
    }
    let total = injections.len();

    // Landing cycle of each group's weights per column, once issued.
    let mut landed: Vec<Vec<Option<u64>>> = vec![vec![None; c]; plan.groups.len()];
    let mut last_drain: Vec<Vec<u64>> = vec![vec![0; c]; plan.groups.len()];

    let load_group = |b: &mut Builder, gi: usize, col: usize, earliest: u64| -> u64 {
        let grp = &plan.groups[gi];
        let mut land = earliest;
        for kt in grp.k_tiles.clone() {
            for nt in grp.n_tiles.clone() {
                let n = nt * c + col;
                if n >= g.n {
                    continue;
                }
                let slot = grp.slot(kt, nt);
                for cp in 0..plan.copies {
                    for rho in 0..plan.valid_rows(g.k, kt) {
                        let k = if plan.copies > 1 { rho } else { kt * r + rho };
                        let row = cp * plan.rows_per_copy + rho;
                        land = land.max(b.load_weight(col, row, slot, (g.weight)(k, n), g.conj_weight, earliest));
                    }
                }
            }
        }
        land
    };

    for gi in 0..plan.buffers.min(plan.groups.len()) {
        for col in 0..live_cols {
            landed[gi][col] = Some(load_group(b, gi, col, 0));
        }
    }

    let mut lanes: HashMap<(usize, usize, usize), u32> = HashMap::new();
    let mut t_prev: Option<u64> = None;
    for p in 0..total + live_cols - 1 {
        // Earliest period start: after the previous one and after every
        // column that starts a new group here has its weights.
        let mut t = match t_prev {
            Some(tp) => tp + period,
            None => read_cycles - 1,
        };
        for col in 0..live_cols {
            if let Some(q) = p.checked_sub(col).filter(|q| *q < total) {
                let gi = injections[q].0;
                if first_q[gi] == q {
                    let land = landed[gi][col].expect("weights issued before their group starts");
                    t = t.max(land);
                }
            }
        }
        t_prev = Some(t);

        if p < total {
            let (_, batch, kt) = injections[p];
            for cp in 0..plan.copies {
                let m = batch * plan.copies + cp;
                if m >= g.m {
                    continue;
                }
                for rho in 0..plan.valid_rows(g.k, kt) {
                    let k = if plan.copies > 1 { rho } else { kt * r + rho };
                    b.inject_left(cp * plan.rows_per_copy + rho, (g.input)(m, k), t);
                }
            }
        }
        if live_cols > 1 {
            for row in 0..plan.copies * plan.rows_per_copy {
                b.shift_right(row, t);
            }
        }

        for col in 0..live_cols {
            let Some(q) = p.checked_sub(col).filter(|q| *q < total) else { continue };
            let (gi, batch, kt) = injections[q];
            let grp = &plan.groups[gi];
            let rows = plan.valid_rows(g.k, kt);
            for (i, nt) in grp.n_tiles.clone().enumerate() {
                let n = nt * c + col;
                if n >= g.n {
                    continue;
                }
                let fire_at = t + 1 + i as u64 * lat;
                for cp in 0..plan.copies {
                    let m = batch * plan.copies + cp;
                    if m >= g.m {
                        continue;
                    }
                    let seg = cp * plan.rows_per_copy;
                    let key = (col, cp, nt);
                    let lane = if kt == grp.k_tiles.start {
                        let l = b.lane();
                        lanes.insert(key, l);
                        l
                    } else {
                        lanes[&key]
                    };
                    b.fire(fire_at, col, seg, rows, MacOperand::Slot(grp.slot(kt, nt) as u8), MacMode::Accumulate { lane });
                    if kt + 1 == grp.k_tiles.end {
                        let ready = fire_at + lat + (r - 1 - seg) as u64;
                        let entry = (m * g.n + n) as u32;
                        let d = b.drain(col, seg, lane, entry, ready);
                        last_drain[gi][col] = last_drain[gi][col].max(d);
                        if grp.k_tiles.end == plan.k_tiles {
                            b.write(col, 1, seg, entry, (g.output)(m, n), d + 1);
                        }
                    }
                }
            }
            // The group's last injection has left this column: its slots
            // can take the group that reuses them.
            if last_q[gi] == q {
                let next = gi + plan.buffers;
                if next < plan.groups.len() {
                    landed[next][col] = Some(load_group(b, next, col, last_drain[gi][col]));
                }
            }
        }
    }
}

pub(crate) fn map_matmul(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let layout = standard_layout(spec);
    let (a, w, o) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Weight), region(&layout, RegionRole::Output));
    let mut b = Builder::new(cfg, layout);
    let (m, k) = spec.input_shape;
    let n = spec.weight_shape.1;
    emit_gemm(
        &mut b,
        &Gemm {
            m,
            k,
            n,
            in_complex: spec.dtype_in.is_complex(),
            w_complex: spec.dtype_w.is_complex(),
            conj_weight: false,
            input: &|i, j| Src::Mem(a.addr(i, j)),
            weight: &|i, j| w.addr(i, j),
            output: &|i, j| o.addr(i, j),
        },
    );
    Ok(b.finish())
}

/// `sum_m a[m]^T b[m]` as the product `A^T B` with `A^T` streamed from the
/// left: row `p` of the input is column `p` of `A`.
pub(crate) fn map_outer_product(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let layout = standard_layout(spec);
    let (a, w, o) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Weight), region(&layout, RegionRole::Output));
    let mut b = Builder::new(cfg, layout);
    let (m, d) = spec.input_shape;
    emit_gemm(
        &mut b,
        &Gemm {
            m: d,
            k: m,
            n: d,
            in_complex: spec.dtype_in.is_complex(),
            w_complex: spec.dtype_w.is_complex(),
            conj_weight: false,
            input: &|p, row| Src::Mem(a.addr(row, p)),
            weight: &|row, q| w.addr(row, q),
            output: &|p, q| o.addr(p, q),
        },
    );
    Ok(b.finish())
}

/// Multi-filter convolution as a GEMM over the sliding-window view of the
/// input: window `j` is the row `x[j*s .. j*s + K]`.
pub(crate) fn map_conv_im2col(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let layout = standard_layout(spec);
    let (x, h, o) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Weight), region(&layout, RegionRole::Output));
    let mut b = Builder::new(cfg, layout);
    let stride = spec.stride;
    b.note("multi-filter convolution mapped as a GEMM over sliding windows");
    emit_gemm(
        &mut b,
        &Gemm {
            m: spec.window_count(),
            k: spec.taps(),
            n: spec.out_channels(),
            in_complex: spec.dtype_in.is_complex(),
            w_complex: spec.dtype_w.is_complex(),
            conj_weight: false,
            input: &|j, t| Src::Mem(x.addr(j * stride + t, 0)),
            weight: &|t, f| h.addr(t, f),
            output: &|j, f| o.addr(j, f),
        },
    );
    Ok(b.finish())
}
