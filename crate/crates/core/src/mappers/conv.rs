use crate::fabric::{ArrayConfig, MacMode, MacOperand, RegionRole, Schedule, Src};
use crate::oracle::{KernelKind, KernelSpec};

use super::builder::Builder;
use super::matmul::{emit_gemm, Gemm};
use super::{region, standard_layout, MapError};

/// Single-filter sliding correlation. A filter spans `ceil(K / rows)`
/// adjacent columns with its taps reversed down each column, so a sample
/// shifted in at the top meets the taps in order as it moves down. The
/// array holds as many filter copies as fit side by side, and each copy
/// computes a contiguous run of windows.
pub(crate) fn map_conv(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let (r, c) = (cfg.rows, cfg.cols);
    let k = spec.taps();
    let per_filter = k.div_ceil(r);
    if per_filter > c {
        return map_long_filter(spec, cfg);
    }
    let layout = standard_layout(spec);
    let (x, h, o) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Weight), region(&layout, RegionRole::Output));
    let mut b = Builder::new(cfg, layout);
    let n = spec.input_shape.0;
    let stride = spec.stride;
    let windows = spec.window_count();
    let streams = if spec.kind == KernelKind::MatchedFilter { spec.streams } else { 1 };
    let conj = spec.kind == KernelKind::MatchedFilter;
    let complex_in = spec.dtype_in.is_complex();
    let lat = cfg.mac_latency.get(complex_in, spec.dtype_w.is_complex()) as u64;
    let copies = (c / per_filter).min(windows).max(1);
    if stride >= r {
        b.note(format!("stride {stride} reaches the column height: every window refills the column"));
    }

    let tap = |local: usize, row: usize| local * r + (r - 1 - row);
    let first_row = |local: usize| ((local + 1) * r).saturating_sub(k);

    let mut ready_at = vec![0u64; c];
    for q in 0..copies {
        for local in 0..per_filter {
            let col = q * per_filter + local;
            for row in first_row(local)..r {
                let land = b.load_weight(col, row, 0, h.addr(tap(local, row), 0), conj, 0);
                ready_at[col] = ready_at[col].max(land + 1);
            }
        }
    }

    let share = windows.div_ceil(copies);
    let mut cursor = vec![0u64; copies];
    let mut free = vec![0u64; copies];
    for q in 0..copies {
        free[q] = (0..per_filter).map(|l| ready_at[q * per_filter + l]).max().unwrap_or(0);
    }
    for st in 0..streams {
        for q in 0..copies {
            let run = (q * share)..((q + 1) * share).min(windows);
            for (i, j) in run.clone().enumerate() {
                // Column `local` needs sample `j*s + local*r + r-1-row` on `row`.
                let fresh = i == 0 || stride >= r;
                let count = if fresh { r } else { stride };
                let mut t = cursor[q];
                for step in 0..count {
                    let newest = j * stride + r - 1;
                    let offset = count - 1 - step;
                    let cols: Vec<(usize, Src)> = (0..per_filter)
                        .map(|local| {
                            let idx = newest + local * r - offset;
                            let src = if idx < n {
                                Src::Mem(x.addr(idx, st))
                            } else {
                                Src::Zero { complex: complex_in }
                            };
                            (q * per_filter + local, src)
                        })
                        .collect();
                    while !cols.iter().all(|&(col, src)| b.inject_down_fits(col, src, t)) {
                        t += 1;
                    }
                    for (col, src) in cols {
                        b.inject_down(col, src, t);
                    }
                    t += 1;
                }
                let fire = t.max(free[q]);
                let entry = (st * windows + j) as u32;
                let mut drained = fire;
                for local in 0..per_filter {
                    let col = q * per_filter + local;
                    let row = first_row(local);
                    let lane = b.lane();
                    b.fire(fire, col, row, r - row, MacOperand::Slot(0), MacMode::Accumulate { lane });
                    let ready = fire + lat + (r - 1 - row) as u64;
                    drained = drained.max(b.drain(col, row, lane, entry, ready));
                }
                b.write(q * per_filter, per_filter, 0, entry, o.addr(j, st), drained + 1);
                free[q] = fire + lat;
                cursor[q] = fire;
            }
        }
    }
    Ok(b.finish())
}

/// Filters longer than a full array row of columns fall back to a GEMM
/// over the sliding-window matrix.
fn map_long_filter(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let layout = standard_layout(spec);
    let (x, h, o) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Weight), region(&layout, RegionRole::Output));
    let mut b = Builder::new(cfg, layout);
    b.note("filter longer than the array: mapped as a GEMM over sliding windows");
    let n = spec.input_shape.0;
    let stride = spec.stride;
    let windows = spec.window_count();
    let complex_in = spec.dtype_in.is_complex();
    let conj = spec.kind == KernelKind::MatchedFilter;
    let streams = if conj { spec.streams } else { 1 };
    let input = |row: usize, t: usize| {
        let (st, j) = (row / windows, row % windows);
        let idx = j * stride + t;
        if idx < n {
            Src::Mem(x.addr(idx, st))
        } else {
            Src::Zero { complex: complex_in }
        }
    };
    emit_gemm(
        &mut b,
        &Gemm {
            m: windows * streams,
            k: spec.taps(),
            n: 1,
            in_complex: complex_in,
            w_complex: spec.dtype_w.is_complex(),
            conj_weight: conj,
            input: &input,
            weight: &|t, f| h.addr(t, f),
            output: &|row, _| o.addr(row % windows, row / windows),
        },
    );
    Ok(b.finish())
}
