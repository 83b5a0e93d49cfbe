//! Float kernels on the spatial array.
//!
//! Forward substitution runs iteration `j` on column `j % cols`: the column
//! holds row `j` of the matrix as weights, the pivot PE forms `x[j]` and
//! passes it down, and every other PE updates the right-hand side it holds
//! before handing it one column to the right. Values leaving the last
//! column wrap to the first through the row's reinjection buffer.
//!
//! Cholesky runs iteration `k` with column 0 forming `1/sqrt(a_kk)` and
//! streaming column `k` of `L` out, while the other columns share the
//! trailing update row by row. Updated rows go back to memory and are read
//! again by the next iteration.

use std::collections::{HashMap, HashSet};

use crate::fabric::{ArrayConfig, Bank, FpDest, FpKind, FpSrc, Layout, MicroOp, RegionRole, Schedule, FP_RECIP_LATENCY};
use crate::oracle::KernelSpec;

use super::builder::Builder;
use super::{region, standard_layout, MapError};

type Pe = (usize, usize);

/// A register value and the first cycle it can be read.
#[derive(Clone, Copy, Debug)]
struct Val {
    pe: Pe,
    tag: u32,
    at: u64,
}

#[derive(Clone, Copy)]
enum Opnd {
    Reg(Val),
    /// Weight slot and the cycle its word lands.
    Slot(usize, u64),
}

struct RegLife {
    pe: Pe,
    set: u64,
    uses: Vec<(u64, usize)>,
}

struct Planner<'a> {
    b: Builder<'a>,
    cfg: &'a ArrayConfig,
    next_tag: u32,
    busy: HashSet<(Pe, u64)>,
    right: HashSet<(usize, usize, u64)>,
    fresh_at: HashMap<u32, u64>,
    slot_use: HashMap<(Pe, usize), u64>,
    fifo: HashMap<u64, usize>,
    last_push: Vec<Option<u64>>,
    last_pop: Vec<Option<u64>>,
    regs: HashMap<u32, RegLife>,
}

impl<'a> Planner<'a> {
    fn new(cfg: &'a ArrayConfig, layout: Layout) -> Self {
        Planner {
            b: Builder::new(cfg, layout),
            cfg,
            next_tag: 0,
            busy: HashSet::new(),
            right: HashSet::new(),
            fresh_at: HashMap::new(),
            slot_use: HashMap::new(),
            fifo: HashMap::new(),
            last_push: vec![None; cfg.rows],
            last_pop: vec![None; cfg.rows],
            regs: HashMap::new(),
        }
    }

    fn reg(&mut self, pe: Pe, at: u64) -> Val {
        self.next_tag += 1;
        let tag = self.next_tag;
        self.regs.insert(tag, RegLife { pe, set: at.saturating_sub(1), uses: Vec::new() });
        Val { pe, tag, at }
    }

    fn used(&mut self, v: Val, cycle: u64, op: usize) {
        self.regs.get_mut(&v.tag).expect("value was created by the planner").uses.push((cycle, op));
    }

    fn fresh(&self, addr: u32) -> u64 {
        self.fresh_at.get(&addr).copied().unwrap_or(0)
    }

    fn read(&mut self, bank: Bank, addr: u32, earliest: u64) -> Val {
        let pe = match bank {
            Bank::Top(c) => (0, c as usize),
            Bank::Left(r) => (r as usize, 0),
        };
        let from = earliest.max(self.fresh(addr));
        let v = self.reg(pe, 0);
        let t = self.b.fp_read(bank, addr, v.tag, from);
        self.regs.get_mut(&v.tag).expect("just created").set = t;
        Val { at: t + 1, ..v }
    }

    /// Loads `addr` into a weight slot once earlier reads of the slot are done.
    fn load(&mut self, pe: Pe, slot: usize, addr: u32) -> u64 {
        let earliest = self.slot_use.get(&(pe, slot)).copied().unwrap_or(0).max(self.fresh(addr));
        self.b.load_weight(pe.1, pe.0, slot, addr, false, earliest)
    }

    fn op(&mut self, pe: Pe, kind: FpKind, srcs: &[Opnd], earliest: u64) -> Val {
        let lat = if kind.is_reciprocal_class() { FP_RECIP_LATENCY } else { self.cfg.mac_latency.real_real } as u64;
        let ready = srcs.iter().fold(earliest, |t, s| match *s {
            Opnd::Reg(v) => t.max(v.at),
            Opnd::Slot(_, land) => t.max(land + 1),
        });
        let mut t = ready;
        while (t..t + lat).any(|u| self.busy.contains(&(pe, u))) {
            t += 1;
        }
        self.busy.extend((t..t + lat).map(|u| (pe, u)));
        let fp: Vec<FpSrc> = srcs
            .iter()
            .map(|s| match *s {
                Opnd::Reg(v) => FpSrc::Reg { tag: v.tag, take: false },
                Opnd::Slot(slot, _) => FpSrc::Slot(slot as u8),
            })
            .collect();
        let dst = self.reg(pe, t + lat);
        let idx = self.b.push(
            t,
            MicroOp::FpOp { row: pe.0 as u16, col: pe.1 as u16, kind, dst: dst.tag, a: fp[0], b: fp.get(1).copied(), c: fp.get(2).copied() },
        );
        for s in srcs {
            match *s {
                Opnd::Reg(v) => self.used(v, t, idx),
                Opnd::Slot(slot, _) => {
                    let u = self.slot_use.entry((pe, slot)).or_insert(0);
                    *u = (*u).max(t);
                }
            }
        }
        dst
    }

    fn write(&mut self, v: Val, addr: u32) -> u64 {
        let t = v.at;
        let idx = self.b.push(t, MicroOp::FpWrite { row: v.pe.0 as u16, col: v.pe.1 as u16, tag: v.tag, addr, take: false });
        self.used(v, t, idx);
        self.fresh_at.insert(addr, t + 1);
        t
    }

    fn move_down(&mut self, v: Val) -> Val {
        let (row, col) = v.pe;
        let dest = (row + 1) % self.cfg.rows;
        let mut t = v.at;
        while !self.b.word_down_fits(col, dest, t) {
            t += 1;
        }
        self.b.book_word_down(col, dest, t);
        let out = self.reg((dest, col), t + 1);
        let idx = self.b.push(t, fp_move(v, FpDest::Down, out.tag));
        self.used(v, t, idx);
        out
    }

    fn move_right(&mut self, v: Val) -> Val {
        let (row, col) = v.pe;
        let mut t = v.at;
        while self.right.contains(&(row, col + 1, t)) {
            t += 1;
        }
        self.right.insert((row, col + 1, t));
        let out = self.reg((row, col + 1), t + 1);
        let idx = self.b.push(t, fp_move(v, FpDest::Right, out.tag));
        self.used(v, t, idx);
        out
    }

    /// Sends a value from the last column through the row's reinjection
    /// buffer into the first column. Each row pushes and pops in order and
    /// the shared buffer never holds more than `rows` words.
    fn reinject(&mut self, v: Val) -> Val {
        let row = v.pe.0;
        let cap = self.cfg.rows;
        let mut tp = v.at.max(self.last_push[row].map_or(0, |p| p + 1));
        let tq = loop {
            let tq = (tp + 1).max(self.last_pop[row].map_or(0, |p| p + 1));
            if (tp..=tq).all(|u| self.fifo.get(&u).copied().unwrap_or(0) < cap) {
                break tq;
            }
            tp += 1;
        };
        for u in tp..=tq {
            *self.fifo.entry(u).or_insert(0) += 1;
        }
        self.last_push[row] = Some(tp);
        self.last_pop[row] = Some(tq);
        let idx = self.b.push(tp, fp_move(v, FpDest::Reinject, 0));
        self.used(v, tp, idx);
        let out = self.reg((row, 0), tq + 1);
        self.b.push(tq, MicroOp::FpReinject { row: row as u16, tag: out.tag });
        out
    }

    /// Frees every register at its last use and checks register pressure.
    fn finish(mut self, kernel: crate::oracle::KernelKind) -> Result<Schedule, MapError> {
        let mut deltas: HashMap<Pe, Vec<(u64, i32)>> = HashMap::new();
        for (tag, life) in &self.regs {
            let Some(&(last, idx)) = life.uses.iter().max_by_key(|(c, i)| (*c, *i)) else {
                return Err(MapError::Unsupported { kernel, reason: format!("register {tag} is never read") });
            };
            release(self.b.op_mut(idx), *tag);
            let d = deltas.entry(life.pe).or_default();
            d.push((life.set, 1));
            d.push((last + 1, -1));
        }
        let cap = self.cfg.register_capacity() as i32;
        for (pe, mut d) in deltas {
            // Frees before sets at the same cycle are not assumed.
            d.sort_by_key(|&(c, delta)| (c, -delta));
            let mut live = 0;
            for (_, delta) in d {
                live += delta;
                if live > cap {
                    return Err(MapError::Unsupported {
                        kernel,
                        reason: format!("PE {},{} needs more than {cap} registers", pe.0, pe.1),
                    });
                }
            }
        }
        Ok(self.b.finish())
    }
}

fn fp_move(v: Val, to: FpDest, to_tag: u32) -> MicroOp {
    MicroOp::FpMove { row: v.pe.0 as u16, col: v.pe.1 as u16, tag: v.tag, to, to_tag, keep: true }
}

fn release(op: &mut MicroOp, tag: u32) {
    match op {
        MicroOp::FpOp { a, b, c, .. } => {
            for s in [Some(a), b.as_mut(), c.as_mut()].into_iter().flatten() {
                if let FpSrc::Reg { tag: t, take } = s {
                    if *t == tag {
                        *take = true;
                        return;
                    }
                }
            }
        }
        MicroOp::FpMove { keep, .. } => *keep = false,
        MicroOp::FpWrite { take, .. } => *take = true,
        _ => unreachable!("only float ops read registers"),
    }
}

pub(crate) fn map_trisolve(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let n = spec.input_shape.0;
    let (r, c) = (cfg.rows, cfg.cols);
    if n > r * cfg.pe_buffer_depth {
        return Err(MapError::Unsupported {
            kernel: spec.kind,
            reason: format!("{n} unknowns exceed the {} weight slots of a column", r * cfg.pe_buffer_depth),
        });
    }
    let layout = standard_layout(spec);
    let (a, rhs, out) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Weight), region(&layout, RegionRole::Output));
    let mut p = Planner::new(cfg, layout);
    if n > c {
        p.b.note("right-hand sides wrap from the last column through the reinjection buffer");
    }

    let mut rhs_at: Vec<Option<Val>> = (0..n).map(|i| Some(p.read(Bank::Left((i % r) as u16), rhs.addr(i, 0), 0))).collect();
    for j in 0..n {
        let col = j % c;
        let land: Vec<u64> = (j..n).map(|i| p.load((i % r, col), (i - j) / r, a.addr(j, i))).collect();
        let bj = rhs_at[j].take().expect("each right-hand side is consumed once");
        let x = p.op(bj.pe, FpKind::Div, &[Opnd::Reg(bj), Opnd::Slot(0, land[0])], 0);
        p.write(x, out.addr(j, 0));
        // xs[h] sits `h` rows below the pivot.
        let mut xs = vec![x];
        for h in 1..=(n - 1 - j).min(r - 1) {
            let next = p.move_down(xs[h - 1]);
            xs.push(next);
        }
        for i in (j + 1)..n {
            let e = i - j;
            let bi = rhs_at[i].take().expect("right-hand side is live until its pivot");
            let nb = p.op(bi.pe, FpKind::MulSub, &[Opnd::Reg(bi), Opnd::Slot(e / r, land[e]), Opnd::Reg(xs[e % r])], 0);
            rhs_at[i] = Some(if col + 1 < c { p.move_right(nb) } else { p.reinject(nb) });
        }
    }
    p.finish(spec.kind)
}

pub(crate) fn map_cholesky(spec: &KernelSpec, cfg: &ArrayConfig) -> Result<Schedule, MapError> {
    let n = spec.input_shape.0;
    let (r, c, depth) = (cfg.rows, cfg.cols, cfg.pe_buffer_depth);
    if c < 2 || depth < 2 {
        return Err(MapError::Unsupported { kernel: spec.kind, reason: "needs two columns and two weight slots".into() });
    }
    let layout = standard_layout(spec);
    let (wm, out) = (region(&layout, RegionRole::Input), region(&layout, RegionRole::Output));
    let mut p = Planner::new(cfg, layout);
    let trailing = c - 1;
    // Per trailing column: cycle after which the next alpha may be formed.
    let mut gate = vec![0u64; c];

    for k in 0..n {
        let akk = p.read(Bank::Left(0), wm.addr(k, k), 0);
        let inv = (k + 1 < n).then(|| p.op((0, 0), FpKind::Recip, &[Opnd::Reg(akk)], 0));
        let isq = p.op((0, 0), FpKind::InvSqrt, &[Opnd::Reg(akk)], 0);

        // Column 0: L[i][k] = a_ki / sqrt(a_kk), element i on row (i - k) % rows.
        let mut isqs = vec![isq];
        for h in 1..=(n - 1 - k).min(r - 1) {
            let next = p.move_down(isqs[h - 1]);
            isqs.push(next);
        }
        for i in k..n {
            let e = i - k;
            let aki = if e == 0 { akk } else { p.read(Bank::Left((e % r) as u16), wm.addr(k, i), 0) };
            let l = p.op(aki.pe, FpKind::Mul, &[Opnd::Reg(isqs[e % r]), Opnd::Reg(aki)], 0);
            p.write(l, out.addr(i, k));
        }

        let Some(inv) = inv else { continue };
        let used_cols = trailing.min(n - 1 - k);
        let mut invs = vec![inv];
        for _ in 0..used_cols {
            let next = p.move_right(*invs.last().expect("starts non-empty"));
            invs.push(next);
        }
        for j in (k + 1)..n {
            let col = 1 + (j - k - 1) % trailing;
            // Element i of row j sits on row (i - j) % rows with its pair of
            // slots (a_ji, a_ki) chosen round-robin from the buffer.
            let slots = |e: usize| {
                let base = 2 * (e / r);
                (base % depth, (base + 1) % depth)
            };
            let (_, s_kj) = slots(0);
            let land_kj = p.load((0, col), s_kj, wm.addr(k, j));
            let alpha = p.op((0, col), FpKind::Mul, &[Opnd::Reg(invs[col]), Opnd::Slot(s_kj, land_kj)], gate[col]);
            let mut alphas = vec![alpha];
            for h in 1..=(n - 1 - j).min(r - 1) {
                let next = p.move_down(alphas[h - 1]);
                alphas.push(next);
            }
            let mut last = 0;
            for i in j..n {
                let e = i - j;
                let pe = (e % r, col);
                let (s_ji, s_ki) = slots(e);
                let land_ji = p.load(pe, s_ji, wm.addr(j, i));
                let land_ki = if e == 0 { land_kj } else { p.load(pe, s_ki, wm.addr(k, i)) };
                let upd = p.op(
                    pe,
                    FpKind::MulSub,
                    &[Opnd::Slot(s_ji, land_ji), Opnd::Reg(alphas[e % r]), Opnd::Slot(s_ki, land_ki)],
                    0,
                );
                last = last.max(upd.at);
                p.write(upd, wm.addr(j, i));
            }
            gate[col] = last.saturating_sub(r as u64);
        }
    }
    p.finish(spec.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mappers::tests::run_checked;

    #[test]
    fn trisolve_wraps_through_the_reinjection_buffer() {
        let cfg = ArrayConfig::default();
        let sched = map_trisolve(&KernelSpec::trisolve(32), &cfg).unwrap();
        let pops = sched.ops.iter().filter(|o| matches!(o.op, MicroOp::FpReinject { .. })).count();
        // Each right-hand side i wraps once per full pass over the columns.
        let want: usize = (0..32).map(|i| i / cfg.cols).sum();
        assert_eq!(pops, want);
        assert!(pops >= 3);
        run_checked(&KernelSpec::trisolve(32), &cfg, 1);
    }

    #[test]
    fn cholesky_streams_l_from_column_zero() {
        let cfg = ArrayConfig::default();
        let sched = map_cholesky(&KernelSpec::cholesky(12), &cfg).unwrap();
        let writes_l = sched
            .ops
            .iter()
            .filter(|o| matches!(o.op, MicroOp::FpWrite { col: 0, .. }))
            .count();
        assert_eq!(writes_l, 12 * 13 / 2);
    }

    #[test]
    fn oversized_trisolve_is_unsupported() {
        let err = map_trisolve(&KernelSpec::trisolve(65), &ArrayConfig::default()).unwrap_err();
        assert!(matches!(err, MapError::Unsupported { .. }));
    }
}
