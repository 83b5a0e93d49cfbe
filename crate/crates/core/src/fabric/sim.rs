use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::numeric::{Acc, CValue, DType, FMatrix, Tensor};
use crate::oracle::{Operand, Operands, Output};

use super::resources::ResourceTracker;
use super::schedule::{Bank, FpDest, FpKind, FpSrc, Layout, MacMode, MacOperand, MicroOp, RegionRole, Schedule, Src, WordFormat};
use super::{ArrayConfig, SimError, FP_RECIP_LATENCY};

/// Pivot magnitude below which a float division is treated as singular.
pub const FP_PIVOT_EPS: f64 = 1e-12;

/// One line of the optional execution trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub unit: String,
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub output: Output,
    pub latency_cycles: u64,
    /// Multiplier-occupied cycles summed over all PEs.
    pub mult_busy_cycles: u64,
    /// Cycles before completion in which no multiplier was busy, i.e. the
    /// array waited on operand delivery, drains or writeback.
    pub stall_cycles_memory: u64,
    pub per_bank_read_totals: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<TraceEvent>>,
}

impl SimResult {
    /// Trace as line-delimited JSON.
    pub fn trace_jsonl(&self) -> Option<String> {
        self.trace.as_ref().map(|events| {
            let mut s = String::new();
            for e in events {
                s.push_str(&serde_json::to_string(e).expect("trace serializes"));
                s.push('\n');
            }
            s
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Word {
    Fx { v: CValue, complex: bool },
    Fp(f64),
}

impl Word {
    fn zero(format: WordFormat) -> Word {
        match format {
            WordFormat::Real => Word::Fx { v: CValue::ZERO, complex: false },
            WordFormat::Complex => Word::Fx { v: CValue::ZERO, complex: true },
            WordFormat::Float => Word::Fp(0.0),
        }
    }

    fn trace_value(self) -> serde_json::Value {
        match self {
            Word::Fx { v, .. } => json!([v.re.raw(), v.im.raw()]),
            Word::Fp(x) => json!(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Fx {
    v: CValue,
    complex: bool,
}

struct Pe {
    input: Option<Fx>,
    slots: Vec<Option<Word>>,
    /// Open accumulate-mode contributions per slot.
    open: Vec<u32>,
    busy_until: u64,
    regs: HashMap<u32, f64>,
}

struct Lane {
    sum: Acc,
    ready: u64,
    rows: (usize, usize),
    parts: Vec<(u16, u16, u8)>,
}

enum Event {
    Land { row: usize, col: usize, slot: usize, word: Word },
    Reg { row: usize, col: usize, tag: u32, val: f64 },
    Mem { addr: u32, word: Word },
}

struct Pending {
    cycle: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        (self.cycle, self.seq) == (o.cycle, o.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.cycle, self.seq).cmp(&(o.cycle, o.seq))
    }
}

/// End-of-cycle state change computed from start-of-cycle state.
enum Effect {
    Input { row: usize, col: usize, val: Option<Fx> },
    Mem { addr: u32, word: Word },
    Reg { row: usize, col: usize, tag: u32, val: f64 },
    DelReg { row: usize, col: usize, tag: u32 },
    Push { row: usize, val: f64 },
    Pop { row: usize },
    AccAdd { acc: usize, entry: u32, sum: Acc },
    AccClear { acc: usize, entry: u32 },
}

struct Machine<'a> {
    cfg: &'a ArrayConfig,
    layout: &'a Layout,
    pes: Vec<Pe>,
    mem: Vec<Word>,
    lanes: HashMap<(u16, u32), Lane>,
    accs: Vec<HashMap<u32, Acc>>,
    fifo: Vec<VecDeque<f64>>,
    pending: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    trace: Option<Vec<TraceEvent>>,
    /// Drains of the current cycle: (column, segment start, lowest row).
    drained: Vec<(u16, u16, usize)>,
    busy_total: u64,
    busy_spans: Vec<(u64, u64)>,
    last_write: Option<u64>,
}

fn pe_label(row: usize, col: usize) -> String {
    format!("pe[{row},{col}]")
}

impl<'a> Machine<'a> {
    fn pe(&self, row: usize, col: usize) -> &Pe {
        &self.pes[row * self.cfg.cols + col]
    }

    fn pe_mut(&mut self, row: usize, col: usize) -> &mut Pe {
        &mut self.pes[row * self.cfg.cols + col]
    }

    fn emit(&mut self, cycle: u64, unit: impl FnOnce() -> String, op: &str, value: Option<serde_json::Value>) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent { cycle, unit: unit(), op: op.to_string(), value });
        }
    }

    fn defer(&mut self, cycle: u64, event: Event) {
        self.seq += 1;
        self.pending.push(Reverse(Pending { cycle, seq: self.seq, event }));
    }

    fn read_mem(&self, cycle: u64, addr: u32) -> Result<Word, SimError> {
        self.mem
            .get(addr as usize)
            .copied()
            .ok_or_else(|| SimError::MissingOperand { cycle, what: format!("memory address {addr}") })
    }

    fn note_busy(&mut self, start: u64, len: u64) {
        self.busy_total += len;
        let end = start + len;
        match self.busy_spans.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => self.busy_spans.push((start, end)),
        }
    }

    fn note_write(&mut self, cycle: u64) {
        self.last_write = Some(self.last_write.map_or(cycle, |w| w.max(cycle)));
    }

    /// Applies every deferred event that commits before `cycle`.
    fn commit_before(&mut self, cycle: u64) -> Result<(), SimError> {
        while let Some(Reverse(p)) = self.pending.peek() {
            if p.cycle >= cycle {
                break;
            }
            let Reverse(p) = self.pending.pop().expect("peeked");
            match p.event {
                Event::Land { row, col, slot, word } => {
                    if self.pe(row, col).open[slot] > 0 {
                        return Err(SimError::WeightMutation { cycle: p.cycle, row, col, slot });
                    }
                    self.pe_mut(row, col).slots[slot] = Some(word);
                    self.emit(p.cycle, || pe_label(row, col), "weight", Some(json!({"slot": slot, "w": word.trace_value()})));
                }
                Event::Reg { row, col, tag, val } => {
                    self.set_reg(p.cycle, row, col, tag, val)?;
                }
                Event::Mem { addr, word } => {
                    self.mem[addr as usize] = word;
                    self.note_write(p.cycle);
                    self.emit(p.cycle, || format!("mem[{addr}]"), "write", Some(word.trace_value()));
                }
            }
        }
        Ok(())
    }

    fn set_reg(&mut self, cycle: u64, row: usize, col: usize, tag: u32, val: f64) -> Result<(), SimError> {
        let cap = self.cfg.register_capacity();
        let pe = self.pe_mut(row, col);
        pe.regs.insert(tag, val);
        if pe.regs.len() > cap {
            return Err(SimError::BufferOverflow { cycle, row, col });
        }
        Ok(())
    }

    fn reg(&self, cycle: u64, row: usize, col: usize, tag: u32) -> Result<f64, SimError> {
        self.pe(row, col)
            .regs
            .get(&tag)
            .copied()
            .ok_or_else(|| SimError::MissingOperand { cycle, what: format!("register {tag} of {}", pe_label(row, col)) })
    }

    fn fp_src(&self, cycle: u64, row: usize, col: usize, src: FpSrc, effects: &mut Vec<Effect>) -> Result<f64, SimError> {
        match src {
            FpSrc::Reg { tag, take } => {
                let v = self.reg(cycle, row, col, tag)?;
                if take {
                    effects.push(Effect::DelReg { row, col, tag });
                }
                Ok(v)
            }
            FpSrc::Slot(s) => match self.pe(row, col).slots.get(s as usize).copied().flatten() {
                Some(Word::Fp(x)) => Ok(x),
                _ => Err(SimError::MissingOperand { cycle, what: format!("float slot {s} of {}", pe_label(row, col)) }),
            },
            FpSrc::Const(x) => Ok(x),
        }
    }

    fn claim_multiplier(&mut self, cycle: u64, row: usize, col: usize, latency: u64) -> Result<(), SimError> {
        let pe = self.pe_mut(row, col);
        if pe.busy_until > cycle {
            return Err(SimError::StructuralHazard { cycle, row, col });
        }
        pe.busy_until = cycle + latency;
        self.note_busy(cycle, latency);
        Ok(())
    }

    fn step(&mut self, cycle: u64, op: &MicroOp, effects: &mut Vec<Effect>) -> Result<(), SimError> {
        let cfg = self.cfg;
        match *op {
            MicroOp::LoadWeight { col, row, slot, addr, conj } => {
                let mut word = self.read_mem(cycle, addr)?;
                if conj {
                    if let Word::Fx { v, complex } = word {
                        word = Word::Fx { v: v.conj()?, complex };
                    }
                }
                let hops = (row as usize - cfg.region_head(row as usize)) as u64;
                self.defer(cycle + hops, Event::Land { row: row as usize, col: col as usize, slot: slot as usize, word });
            }
            MicroOp::InjectTop { col, src } => {
                let val = self.fetch_fx(cycle, src)?;
                effects.push(Effect::Input { row: 0, col: col as usize, val: Some(val) });
            }
            MicroOp::InjectLeft { row, src } => {
                let val = self.fetch_fx(cycle, src)?;
                effects.push(Effect::Input { row: row as usize, col: 0, val: Some(val) });
            }
            MicroOp::ShiftDown { col } => {
                for row in 1..cfg.rows {
                    let val = self.pe(row - 1, col as usize).input;
                    effects.push(Effect::Input { row, col: col as usize, val });
                }
            }
            MicroOp::ShiftRight { row } => {
                for col in 1..cfg.cols {
                    let val = self.pe(row as usize, col - 1).input;
                    effects.push(Effect::Input { row: row as usize, col, val });
                }
            }
            MicroOp::FireMac { col, row, rows, operand, mode } => {
                let c = col as usize;
                for (i, r) in (row as usize..row as usize + rows as usize).enumerate() {
                    let x = self.pe(r, c).input.ok_or_else(|| SimError::MissingOperand {
                        cycle,
                        what: format!("input register of {}", pe_label(r, c)),
                    })?;
                    let (product, w_complex, slot) = match operand {
                        MacOperand::Slot(s) => match self.pe(r, c).slots[s as usize] {
                            Some(Word::Fx { v, complex }) => (Acc::product(x.v, v), complex, Some((s, v))),
                            _ => {
                                return Err(SimError::MissingOperand {
                                    cycle,
                                    what: format!("weight slot {s} of {}", pe_label(r, c)),
                                })
                            }
                        },
                        MacOperand::SelfConj => (Acc::mag_sq(x.v), x.complex, None),
                    };
                    let latency = cfg.mac_latency.get(x.complex, w_complex) as u64;
                    self.claim_multiplier(cycle, r, c, latency)?;
                    if self.trace.is_some() {
                        let lane = match mode {
                            MacMode::Accumulate { lane } => Some(lane),
                            MacMode::ElementWise { .. } => None,
                        };
                        let value = match slot {
                            Some((s, w)) => json!({"slot": s, "w": [w.re.raw(), w.im.raw()], "lane": lane}),
                            None => json!({"slot": null, "lane": lane}),
                        };
                        self.emit(cycle, || pe_label(r, c), "fire", Some(value));
                    }
                    match mode {
                        MacMode::Accumulate { lane } => {
                            let ready = cycle + latency + (cfg.rows - 1 - r) as u64;
                            let entry = self.lanes.entry((col, lane)).or_insert(Lane {
                                sum: Acc::ZERO,
                                ready: 0,
                                rows: (r, r),
                                parts: Vec::new(),
                            });
                            entry.sum = entry.sum.add(product)?;
                            entry.ready = entry.ready.max(ready);
                            entry.rows = (entry.rows.0.min(r), entry.rows.1.max(r));
                            if let Some((s, _)) = slot {
                                entry.parts.push((r as u16, c as u16, s));
                                self.pe_mut(r, c).open[s as usize] += 1;
                            }
                        }
                        MacMode::ElementWise { addr } => {
                            let target = addr + i as u32;
                            let format = self.layout.region_of(target).map(|g| g.format).unwrap_or(WordFormat::Complex);
                            let word = Word::Fx { v: product.round()?, complex: format == WordFormat::Complex };
                            self.defer(cycle + latency - 1, Event::Mem { addr: target, word });
                        }
                    }
                }
            }
            MicroOp::DrainColumn { col, seg, lane, entry } => {
                let l = self.lanes.remove(&(col, lane)).ok_or_else(|| SimError::MissingOperand {
                    cycle,
                    what: format!("lane {lane} of column {col}"),
                })?;
                if l.ready > cycle {
                    return Err(SimError::DrainBeforeReady { cycle, col: col as usize, lane, ready: l.ready });
                }
                if l.rows.0 < seg as usize {
                    return Err(SimError::SegmentOverlap { cycle, col: col as usize });
                }
                self.drained.push((col, seg, l.rows.1));
                for (r, c, s) in &l.parts {
                    self.pe_mut(*r as usize, *c as usize).open[*s as usize] -= 1;
                }
                let acc = col as usize % cfg.accumulators;
                self.emit(cycle, || format!("acc[{acc}]"), "drain", Some(json!({"col": col, "lane": lane, "entry": entry})));
                effects.push(Effect::AccAdd { acc, entry, sum: l.sum });
            }
            MicroOp::AccumulateWrite { col, span, entry, addr, .. } => {
                let accs: std::collections::BTreeSet<usize> =
                    (col..col + span).map(|c| c as usize % cfg.accumulators).collect();
                let mut total = Acc::ZERO;
                for a in accs {
                    let v = self.accs[a].get(&entry).copied().ok_or_else(|| SimError::MissingOperand {
                        cycle,
                        what: format!("entry {entry} of accumulator {a}"),
                    })?;
                    total = total.add(v)?;
                    effects.push(Effect::AccClear { acc: a, entry });
                }
                let format = self.layout.region_of(addr).map(|g| g.format).unwrap_or(WordFormat::Complex);
                let word = Word::Fx { v: total.round()?, complex: format == WordFormat::Complex };
                effects.push(Effect::Mem { addr, word });
            }
            MicroOp::FpRead { bank, addr, tag } => {
                let val = match self.read_mem(cycle, addr)? {
                    Word::Fp(x) => x,
                    Word::Fx { .. } => return Err(SimError::OperandMismatch(format!("float read of fixed word {addr}"))),
                };
                let (row, col) = match bank {
                    Bank::Top(c) => (0, c as usize),
                    Bank::Left(r) => (r as usize, 0),
                };
                effects.push(Effect::Reg { row, col, tag, val });
            }
            MicroOp::FpReinject { row, tag } => {
                let val = self.fifo[row as usize].front().copied().ok_or_else(|| SimError::MissingOperand {
                    cycle,
                    what: format!("reinjection buffer of row {row}"),
                })?;
                effects.push(Effect::Pop { row: row as usize });
                effects.push(Effect::Reg { row: row as usize, col: 0, tag, val });
            }
            MicroOp::FpOp { row, col, kind, dst, a, b, c } => {
                let (r, cl) = (row as usize, col as usize);
                let srcs = [Some(a), b, c];
                if srcs.iter().take(kind.arity()).any(Option::is_none) {
                    return Err(SimError::OperandMismatch(format!("{kind:?} needs {} operands", kind.arity())));
                }
                let mut v = [0.0; 3];
                for (i, s) in srcs.iter().take(kind.arity()).enumerate() {
                    v[i] = self.fp_src(cycle, r, cl, s.expect("checked"), effects)?;
                }
                let singular = |d: f64| d.abs() < FP_PIVOT_EPS;
                let out = match kind {
                    FpKind::Mul => v[0] * v[1],
                    FpKind::MulSub => v[0] - v[1] * v[2],
                    FpKind::Div => {
                        if singular(v[1]) {
                            return Err(SimError::Singular { cycle, row: r, col: cl });
                        }
                        v[0] / v[1]
                    }
                    FpKind::Recip => {
                        if singular(v[0]) {
                            return Err(SimError::Singular { cycle, row: r, col: cl });
                        }
                        1.0 / v[0]
                    }
                    FpKind::InvSqrt => {
                        if !(v[0] > 0.0) {
                            return Err(SimError::NotPositiveDefinite { cycle, row: r, col: cl });
                        }
                        1.0 / v[0].sqrt()
                    }
                };
                let latency = if kind.is_reciprocal_class() { FP_RECIP_LATENCY } else { cfg.mac_latency.real_real } as u64;
                self.claim_multiplier(cycle, r, cl, latency)?;
                self.emit(cycle, || pe_label(r, cl), "fp_op", Some(json!({"kind": format!("{kind:?}"), "dst": dst})));
                self.defer(cycle + latency - 1, Event::Reg { row: r, col: cl, tag: dst, val: out });
            }
            MicroOp::FpMove { row, col, tag, to, to_tag, keep } => {
                let (r, c) = (row as usize, col as usize);
                let val = self.reg(cycle, r, c, tag)?;
                if !keep {
                    effects.push(Effect::DelReg { row: r, col: c, tag });
                }
                match to {
                    FpDest::Down => effects.push(Effect::Reg { row: (r + 1) % cfg.rows, col: c, tag: to_tag, val }),
                    FpDest::Right => effects.push(Effect::Reg { row: r, col: c + 1, tag: to_tag, val }),
                    FpDest::Reinject => effects.push(Effect::Push { row: r, val }),
                }
            }
            MicroOp::FpWrite { row, col, tag, addr, take } => {
                let (r, c) = (row as usize, col as usize);
                let val = self.reg(cycle, r, c, tag)?;
                if take {
                    effects.push(Effect::DelReg { row: r, col: c, tag });
                }
                effects.push(Effect::Mem { addr, word: Word::Fp(val) });
            }
        }
        Ok(())
    }

    fn fetch_fx(&self, cycle: u64, src: Src) -> Result<Fx, SimError> {
        match src {
            Src::Zero { complex } => Ok(Fx { v: CValue::ZERO, complex }),
            Src::Mem(addr) => match self.read_mem(cycle, addr)? {
                Word::Fx { v, complex } => Ok(Fx { v, complex }),
                Word::Fp(_) => Err(SimError::OperandMismatch(format!("fixed-point injection of float word {addr}"))),
            },
        }
    }

    fn apply(&mut self, cycle: u64, effects: Vec<Effect>) -> Result<(), SimError> {
        let mut drained = std::mem::take(&mut self.drained);
        drained.sort_unstable();
        for pair in drained.windows(2) {
            let ((c0, _, last), (c1, next_seg, _)) = (pair[0], pair[1]);
            if c0 == c1 && last >= next_seg as usize {
                return Err(SimError::SegmentOverlap { cycle, col: c0 as usize });
            }
        }
        let mut touched: HashSet<(usize, usize)> = HashSet::new();
        // Clears first so that a drain landing in the same cycle survives.
        for e in &effects {
            if let Effect::AccClear { acc, entry } = e {
                self.accs[*acc].remove(entry);
            }
        }
        for e in effects {
            match e {
                Effect::Input { row, col, val } => {
                    if !touched.insert((row, col)) {
                        return Err(SimError::InputConflict { cycle, row, col });
                    }
                    self.pe_mut(row, col).input = val;
                }
                Effect::Mem { addr, word } => {
                    self.mem[addr as usize] = word;
                    self.note_write(cycle);
                    self.emit(cycle, || format!("mem[{addr}]"), "write", Some(word.trace_value()));
                }
                Effect::Reg { row, col, tag, val } => self.set_reg(cycle, row, col, tag, val)?,
                Effect::DelReg { row, col, tag } => {
                    self.pe_mut(row, col).regs.remove(&tag);
                }
                Effect::Push { row, val } => self.fifo[row].push_back(val),
                Effect::Pop { row } => {
                    self.fifo[row].pop_front();
                }
                Effect::AccAdd { acc, entry, sum } => {
                    let slot = self.accs[acc].entry(entry).or_insert(Acc::ZERO);
                    *slot = slot.add(sum)?;
                }
                Effect::AccClear { .. } => {}
            }
        }
        Ok(())
    }
}

fn load_memory(layout: &Layout, operands: &Operands) -> Result<Vec<Word>, SimError> {
    let mut mem = vec![Word::Fp(0.0); layout.total_len()];
    for region in &layout.regions {
        let source = match region.role {
            RegionRole::Input => Some(&operands.input),
            RegionRole::Weight => Some(operands.weight.as_ref().ok_or_else(|| {
                SimError::OperandMismatch("layout has a weight region but no weight operand was given".into())
            })?),
            RegionRole::Output => None,
        };
        let base = region.base as usize;
        let Some(source) = source else {
            mem[base..base + region.len()].fill(Word::zero(region.format));
            continue;
        };
        if source.shape() != (region.rows, region.cols) {
            return Err(SimError::OperandMismatch(format!(
                "{:?} region is {}x{}, operand is {:?}",
                region.role,
                region.rows,
                region.cols,
                source.shape()
            )));
        }
        match (source, region.format) {
            (Operand::Fixed(t), WordFormat::Real | WordFormat::Complex) => {
                let complex = region.format == WordFormat::Complex;
                if t.kind().is_complex() && !complex {
                    return Err(SimError::OperandMismatch("complex operand in a real region".into()));
                }
                for (i, v) in t.data().iter().enumerate() {
                    mem[base + i] = Word::Fx { v: *v, complex };
                }
            }
            (Operand::Float(m), WordFormat::Float) => {
                for (i, v) in m.data().iter().enumerate() {
                    mem[base + i] = Word::Fp(*v);
                }
            }
            _ => return Err(SimError::OperandMismatch(format!("{:?} operand has the wrong number format", region.role))),
        }
    }
    Ok(mem)
}

fn extract_output(layout: &Layout, mem: &[Word]) -> Result<Output, SimError> {
    let region = layout
        .find(RegionRole::Output)
        .ok_or_else(|| SimError::OperandMismatch("layout has no output region".into()))?;
    let words = &mem[region.base as usize..region.base as usize + region.len()];
    match region.format {
        WordFormat::Float => {
            let data = words
                .iter()
                .map(|w| match w {
                    Word::Fp(x) => Ok(*x),
                    Word::Fx { .. } => Err(SimError::OperandMismatch("fixed word in float output".into())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Output::Float(FMatrix::new(region.rows, region.cols, data)?))
        }
        f => {
            let kind = if f == WordFormat::Complex { DType::Complex } else { DType::Real };
            let data = words
                .iter()
                .map(|w| match w {
                    Word::Fx { v, .. } => Ok(*v),
                    Word::Fp(_) => Err(SimError::OperandMismatch("float word in fixed output".into())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Output::Fixed(Tensor::new(region.rows, region.cols, kind, data)?))
        }
    }
}

/// Executes `schedule` cycle by cycle on `operands`.
///
/// Every op of a cycle reads the state at the start of that cycle; all of
/// their effects commit at the end of it.
pub fn simulate(schedule: &Schedule, operands: &Operands, cfg: &ArrayConfig, trace: bool) -> Result<SimResult, SimError> {
    cfg.validate()?;
    if schedule.ops.is_empty() {
        return Err(SimError::EmptySchedule);
    }
    let layout = &schedule.layout;
    let mut machine = Machine {
        cfg,
        layout,
        pes: (0..cfg.pe_count())
            .map(|_| Pe {
                input: None,
                slots: vec![None; cfg.pe_buffer_depth],
                open: vec![0; cfg.pe_buffer_depth],
                busy_until: 0,
                regs: HashMap::new(),
            })
            .collect(),
        mem: load_memory(layout, operands)?,
        lanes: HashMap::new(),
        accs: vec![HashMap::new(); cfg.accumulators],
        fifo: vec![VecDeque::new(); cfg.rows],
        pending: BinaryHeap::new(),
        seq: 0,
        trace: trace.then(Vec::new),
        drained: Vec::new(),
        busy_total: 0,
        busy_spans: Vec::new(),
        last_write: None,
    };
    let mut tracker = ResourceTracker::new(cfg, layout);
    let ops = &schedule.ops;
    let mut i = 0;
    while i < ops.len() {
        let cycle = ops[i].cycle;
        machine.commit_before(cycle)?;
        let mut effects = Vec::new();
        while i < ops.len() && ops[i].cycle == cycle {
            let op = &ops[i].op;
            let charges = tracker.observe(cycle, op).map_err(SimError::Resource)?;
            for (bank, c) in charges {
                machine.emit(c.cycle, || bank.label(), "read", Some(json!(c.units)));
            }
            machine.step(cycle, op, &mut effects)?;
            i += 1;
        }
        machine.apply(cycle, effects)?;
    }
    machine.commit_before(u64::MAX)?;
    if let Some((&(col, lane), _)) = machine.lanes.iter().min_by_key(|(k, _)| **k) {
        return Err(SimError::MissingOperand { cycle: schedule.last_cycle().unwrap_or(0), what: format!("undrained lane {lane} of column {col}") });
    }
    let last = machine.last_write.ok_or(SimError::NoOutput)?;
    let latency = last + 1;
    let busy_within: u64 = machine.busy_spans.iter().map(|&(s, e)| e.min(latency).saturating_sub(s.min(latency))).sum();
    let output = extract_output(layout, &machine.mem)?;
    Ok(SimResult {
        output,
        latency_cycles: latency,
        mult_busy_cycles: machine.busy_total,
        stall_cycles_memory: latency - busy_within,
        per_bank_read_totals: tracker.bank_totals(),
        trace: machine.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{MacLatency, Region};

    fn cfg2() -> ArrayConfig {
        ArrayConfig::with_dims(2, 2)
    }

    /// 1x2 times 2x1, real: rows of one column hold w, x enters from the left.
    fn dot_schedule() -> (Schedule, Operands, Region) {
        let mut layout = Layout::default();
        let a = layout.push(RegionRole::Input, 1, 2, WordFormat::Real);
        let w = layout.push(RegionRole::Weight, 2, 1, WordFormat::Real);
        let o = layout.push(RegionRole::Output, 1, 1, WordFormat::Real);
        let mut s = Schedule { layout, ..Schedule::default() };
        s.push(0, MicroOp::LoadWeight { col: 0, row: 0, slot: 0, addr: w.addr(0, 0), conj: false });
        s.push(1, MicroOp::LoadWeight { col: 0, row: 1, slot: 0, addr: w.addr(1, 0), conj: false });
        s.push(2, MicroOp::InjectLeft { row: 0, src: Src::Mem(a.addr(0, 0)) });
        s.push(2, MicroOp::InjectLeft { row: 1, src: Src::Mem(a.addr(0, 1)) });
        s.push(3, MicroOp::FireMac { col: 0, row: 0, rows: 2, operand: MacOperand::Slot(0), mode: MacMode::Accumulate { lane: 0 } });
        // Ready after the multiply plus one hop down to the bottom row.
        s.push(5, MicroOp::DrainColumn { col: 0, seg: 0, lane: 0, entry: 0 });
        s.push(6, MicroOp::AccumulateWrite { col: 0, span: 1, seg: 0, entry: 0, addr: o.addr(0, 0) });
        let q = |x: f64| CValue::from_f64(x, 0.0).unwrap();
        let ops = Operands::fixed(
            Tensor::new(1, 2, DType::Real, vec![q(0.5), q(0.25)]).unwrap(),
            Some(Tensor::new(2, 1, DType::Real, vec![q(0.5), q(-0.5)]).unwrap()),
        );
        (s, ops, o)
    }

    #[test]
    fn hand_traced_dot_product() {
        let (s, ops, _) = dot_schedule();
        let res = simulate(&s, &ops, &cfg2(), true).unwrap();
        let Output::Fixed(t) = &res.output else { panic!("fixed output expected") };
        assert_eq!(t.get(0, 0).to_f64(), (0.125, 0.0));
        assert_eq!(res.latency_cycles, 7);
        assert_eq!(res.mult_busy_cycles, 2);
        assert_eq!(res.per_bank_read_totals["left[0]"], 1);
        let trace = res.trace.unwrap();
        assert_eq!(trace.iter().filter(|e| e.op == "fire").count(), 2);
        assert!(trace.iter().any(|e| e.op == "weight" && e.cycle == 2 && e.unit == "pe[1,0]"));
    }

    #[test]
    fn early_drain_is_rejected() {
        let (mut s, ops, _) = dot_schedule();
        for t in s.ops.iter_mut() {
            if matches!(t.op, MicroOp::DrainColumn { .. }) {
                t.cycle = 4;
            }
        }
        let err = simulate(&s, &ops, &cfg2(), false).unwrap_err();
        assert_eq!(err, SimError::DrainBeforeReady { cycle: 4, col: 0, lane: 0, ready: 5 });
        assert!(err.is_resource_violation());
    }

    #[test]
    fn reloading_an_open_slot_is_a_mutation() {
        let (mut s, ops, _) = dot_schedule();
        let w = s.layout.find(RegionRole::Weight).unwrap().base;
        s.push(4, MicroOp::LoadWeight { col: 0, row: 0, slot: 0, addr: w, conj: false });
        s.sort();
        let err = simulate(&s, &ops, &cfg2(), false).unwrap_err();
        assert!(matches!(err, SimError::WeightMutation { row: 0, col: 0, slot: 0, .. }), "{err}");
    }

    #[test]
    fn firing_a_busy_multiplier_is_a_hazard() {
        let (mut s, ops, _) = dot_schedule();
        let cfg = ArrayConfig { mac_latency: MacLatency { real_real: 4, ..MacLatency::default() }, ..cfg2() };
        s.push(4, MicroOp::FireMac { col: 0, row: 0, rows: 1, operand: MacOperand::Slot(0), mode: MacMode::Accumulate { lane: 1 } });
        s.sort();
        let err = simulate(&s, &ops, &cfg, false).unwrap_err();
        assert_eq!(err, SimError::StructuralHazard { cycle: 4, row: 0, col: 0 });
    }

    #[test]
    fn empty_schedule_is_an_error() {
        let (mut s, ops, _) = dot_schedule();
        s.ops.clear();
        assert_eq!(simulate(&s, &ops, &cfg2(), false).unwrap_err(), SimError::EmptySchedule);
    }

    #[test]
    fn float_ops_move_and_write() {
        let mut layout = Layout::default();
        let a = layout.push(RegionRole::Input, 1, 2, WordFormat::Float);
        let o = layout.push(RegionRole::Output, 1, 2, WordFormat::Float);
        let mut s = Schedule { layout, ..Schedule::default() };
        s.push(0, MicroOp::FpRead { bank: Bank::Left(1), addr: a.addr(0, 0), tag: 1 });
        s.push(0, MicroOp::FpRead { bank: Bank::Left(0), addr: a.addr(0, 1), tag: 2 });
        s.push(1, MicroOp::FpMove { row: 1, col: 0, tag: 1, to: FpDest::Down, to_tag: 3, keep: false });
        let div = FpOp { row: 0, col: 0, kind: FpKind::Div, dst: 4, a: FpSrc::Reg { tag: 3, take: true }, b: Some(FpSrc::Reg { tag: 2, take: false }), c: None };
        s.push(2, div);
        s.push(2 + FP_RECIP_LATENCY as u64, MicroOp::FpWrite { row: 0, col: 0, tag: 4, addr: o.addr(0, 0), take: true });
        s.push(3, MicroOp::FpMove { row: 0, col: 0, tag: 2, to: FpDest::Right, to_tag: 5, keep: false });
        s.push(4, MicroOp::FpMove { row: 0, col: 1, tag: 5, to: FpDest::Reinject, to_tag: 0, keep: false });
        s.push(5, MicroOp::FpReinject { row: 0, tag: 6 });
        s.push(6, MicroOp::FpOp { row: 0, col: 0, kind: FpKind::InvSqrt, dst: 7, a: FpSrc::Reg { tag: 6, take: true }, b: None, c: None });
        s.push(6 + FP_RECIP_LATENCY as u64, MicroOp::FpWrite { row: 0, col: 0, tag: 7, addr: o.addr(0, 1), take: true });
        s.sort();
        let ops = Operands::float(FMatrix::new(1, 2, vec![3.0, 4.0]).unwrap(), None);
        let res = simulate(&s, &ops, &cfg2(), false).unwrap();
        let Output::Float(m) = res.output else { panic!("float output expected") };
        assert_eq!(m.data(), &[0.75, 0.5]);
        assert_eq!(res.latency_cycles, 11);
    }

    use MicroOp::FpOp;

    #[test]
    fn register_file_overflow() {
        let mut layout = Layout::default();
        let a = layout.push(RegionRole::Input, 1, 1, WordFormat::Float);
        let o = layout.push(RegionRole::Output, 1, 1, WordFormat::Float);
        let mut s = Schedule { layout, ..Schedule::default() };
        let cfg = ArrayConfig { pe_buffer_depth: 1, ..cfg2() };
        for t in 0..3u32 {
            s.push(t as u64, MicroOp::FpRead { bank: Bank::Left(0), addr: a.addr(0, 0), tag: t });
        }
        s.push(5, MicroOp::FpWrite { row: 0, col: 0, tag: 0, addr: o.addr(0, 0), take: true });
        let ops = Operands::float(FMatrix::new(1, 1, vec![1.0]).unwrap(), None);
        let err = simulate(&s, &ops, &cfg, false).unwrap_err();
        assert_eq!(err, SimError::BufferOverflow { cycle: 2, row: 0, col: 0 });
    }
}
