use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ports::{Charge, PortLedger};
use super::schedule::{Bank, FpDest, Layout, MacMode, MacOperand, MicroOp, RegionRole, Schedule, Src};
use super::ArrayConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    PortBudget,
    ShiftBandwidth,
    LinkConflict,
    BufferDepth,
    Accumulator,
    OutOfRange,
    Reinjection,
    Unsorted,
}

/// A resource the schedule oversubscribed, with where and when.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub cycle: u64,
    pub kind: ViolationKind,
    pub resource: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} on {} at cycle {}: {}", self.kind, self.resource, self.cycle, self.detail)
    }
}

/// Outcome of a static resource walk.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub violation: Option<Violation>,
    pub ops_checked: usize,
    /// Peak fraction of the per-cycle read budget used, per bank.
    pub peak_utilization: BTreeMap<String, f64>,
    pub reads: BTreeMap<String, u64>,
}

impl ResourceReport {
    pub fn is_clean(&self) -> bool {
        self.violation.is_none()
    }

    pub fn max_utilization(&self) -> f64 {
        self.peak_utilization.values().copied().fold(0.0, f64::max)
    }
}

#[derive(Default)]
struct CycleUse {
    shift_down: HashSet<u16>,
    shift_right: HashSet<u16>,
    /// Words crossing into (col, row) other than a full-column shift.
    down_words: HashMap<(u16, u16), u8>,
    /// Float moves crossing into (row, col).
    right_words: HashMap<(u16, u16), u8>,
    /// Weight words entering each (col, region head).
    injected: HashMap<(u16, u16), u8>,
    inject_top: HashSet<u16>,
    inject_left: HashSet<u16>,
    drains: HashSet<(usize, u16)>,
    writes: HashSet<(usize, u16)>,
}

/// Cycle-ordered accounting of every shared resource a schedule touches.
pub struct ResourceTracker<'a> {
    cfg: &'a ArrayConfig,
    layout: &'a Layout,
    top: Vec<PortLedger>,
    left: Vec<PortLedger>,
    cycles: BTreeMap<u64, CycleUse>,
    reinject: Vec<usize>,
    now: u64,
}

/// Read charges produced by one op, for tracing.
pub type Charges = Vec<(Bank, Charge)>;

impl<'a> ResourceTracker<'a> {
    pub fn new(cfg: &'a ArrayConfig, layout: &'a Layout) -> Self {
        ResourceTracker {
            cfg,
            layout,
            top: (0..cfg.cols).map(|_| PortLedger::new(cfg.top_reads_per_cycle)).collect(),
            left: (0..cfg.rows).map(|_| PortLedger::new(cfg.left_reads_per_cycle)).collect(),
            cycles: BTreeMap::new(),
            reinject: vec![0; cfg.rows],
            now: 0,
        }
    }

    fn violation(&self, cycle: u64, kind: ViolationKind, resource: impl Into<String>, detail: impl Into<String>) -> Violation {
        Violation { cycle, kind, resource: resource.into(), detail: detail.into() }
    }

    fn at(&mut self, cycle: u64) -> &mut CycleUse {
        self.cycles.entry(cycle).or_default()
    }

    fn check_col(&self, cycle: u64, col: u16) -> Result<(), Violation> {
        if (col as usize) < self.cfg.cols {
            Ok(())
        } else {
            Err(self.violation(cycle, ViolationKind::OutOfRange, format!("col {col}"), "no such column"))
        }
    }

    fn check_row(&self, cycle: u64, row: u16) -> Result<(), Violation> {
        if (row as usize) < self.cfg.rows {
            Ok(())
        } else {
            Err(self.violation(cycle, ViolationKind::OutOfRange, format!("row {row}"), "no such row"))
        }
    }

    fn check_slot(&self, cycle: u64, slot: u8) -> Result<(), Violation> {
        if (slot as usize) < self.cfg.pe_buffer_depth {
            Ok(())
        } else {
            Err(self.violation(
                cycle,
                ViolationKind::BufferDepth,
                format!("slot {slot}"),
                format!("buffer depth is {}", self.cfg.pe_buffer_depth),
            ))
        }
    }

    fn read(&mut self, cycle: u64, bank: Bank, addr: u32) -> Result<Charges, Violation> {
        let region = match self.layout.region_of(addr) {
            Some(r) if r.role != RegionRole::Output => *r,
            _ => {
                return Err(self.violation(cycle, ViolationKind::OutOfRange, bank.label(), format!("address {addr} is not readable")))
            }
        };
        let units = region.format.read_units();
        let ledger = match bank {
            Bank::Top(c) => &mut self.top[c as usize],
            Bank::Left(r) => &mut self.left[r as usize],
        };
        let budget = ledger.budget();
        match ledger.charge(cycle, units) {
            Ok(parts) => Ok(parts.into_iter().map(|p| (bank, p)).collect()),
            Err(at) => Err(self.violation(
                at,
                ViolationKind::PortBudget,
                bank.label(),
                format!("read of {units} units exceeds budget {budget}/cycle"),
            )),
        }
    }

    fn write_target(&self, cycle: u64, addr: u32) -> Result<(), Violation> {
        if self.layout.region_of(addr).is_some() {
            Ok(())
        } else {
            Err(self.violation(cycle, ViolationKind::OutOfRange, "memory", format!("address {addr} outside layout")))
        }
    }

    fn down_word(&mut self, cycle: u64, col: u16, row: u16) -> Result<(), Violation> {
        let bw = self.cfg.column_shift_bandwidth;
        let u = self.at(cycle);
        let shifted = u.shift_down.contains(&col) as u8;
        let n = u.down_words.entry((col, row)).or_insert(0);
        *n += 1;
        if *n + shifted > bw {
            return Err(self.violation(
                cycle,
                ViolationKind::ShiftBandwidth,
                format!("link col {col} into row {row}"),
                format!("more than {bw} words in one cycle"),
            ));
        }
        Ok(())
    }

    fn accumulator(&mut self, cycle: u64, col: u16, seg: u16, write: bool) -> Result<(), Violation> {
        let acc = col as usize % self.cfg.accumulators;
        let u = self.at(cycle);
        let fresh = if write { u.writes.insert((acc, seg)) } else { u.drains.insert((acc, seg)) };
        if !fresh {
            let what = if write { "write" } else { "drain" };
            return Err(self.violation(cycle, ViolationKind::Accumulator, format!("acc {acc} segment {seg}"), format!("second {what} in one cycle")));
        }
        Ok(())
    }

    /// Accounts one op. Ops must arrive in nondecreasing cycle order.
    pub fn observe(&mut self, cycle: u64, op: &MicroOp) -> Result<Charges, Violation> {
        if cycle < self.now {
            return Err(self.violation(cycle, ViolationKind::Unsorted, "schedule", format!("op at {cycle} after cycle {}", self.now)));
        }
        if cycle > self.now {
            self.now = cycle;
            // Reads may reach one cycle back; shifts only look at the current cycle.
            let keep = self.cycles.split_off(&cycle.saturating_sub(2));
            self.cycles = keep;
        }
        let cfg = self.cfg;
        let mut charges = Vec::new();
        match *op {
            MicroOp::LoadWeight { col, row, slot, addr, .. } => {
                self.check_col(cycle, col)?;
                self.check_row(cycle, row)?;
                self.check_slot(cycle, slot)?;
                charges = self.read(cycle, Bank::Top(col), addr)?;
                let head = cfg.region_head(row as usize) as u16;
                let bw = cfg.column_shift_bandwidth;
                let n = self.at(cycle).injected.entry((col, head)).or_insert(0);
                *n += 1;
                if *n > bw {
                    return Err(self.violation(
                        cycle,
                        ViolationKind::ShiftBandwidth,
                        format!("injection col {col} row {head}"),
                        format!("more than {bw} weights injected in one cycle"),
                    ));
                }
                for k in (head + 1)..=row {
                    self.down_word(cycle + (k - head) as u64, col, k)?;
                }
            }
            MicroOp::InjectTop { col, src } => {
                self.check_col(cycle, col)?;
                if !self.at(cycle).inject_top.insert(col) {
                    return Err(self.violation(cycle, ViolationKind::LinkConflict, format!("col {col}"), "two top injections"));
                }
                if let Src::Mem(addr) = src {
                    charges = self.read(cycle, Bank::Top(col), addr)?;
                }
            }
            MicroOp::InjectLeft { row, src } => {
                self.check_row(cycle, row)?;
                if !self.at(cycle).inject_left.insert(row) {
                    return Err(self.violation(cycle, ViolationKind::LinkConflict, format!("row {row}"), "two left injections"));
                }
                if let Src::Mem(addr) = src {
                    charges = self.read(cycle, Bank::Left(row), addr)?;
                }
            }
            MicroOp::ShiftDown { col } => {
                self.check_col(cycle, col)?;
                let bw = cfg.column_shift_bandwidth;
                let u = self.at(cycle);
                if !u.shift_down.insert(col) {
                    return Err(self.violation(cycle, ViolationKind::LinkConflict, format!("col {col}"), "two shifts in one cycle"));
                }
                let busiest = u.down_words.iter().filter(|((c, _), _)| *c == col).map(|(_, n)| *n).max().unwrap_or(0);
                if busiest + 1 > bw {
                    return Err(self.violation(
                        cycle,
                        ViolationKind::ShiftBandwidth,
                        format!("col {col}"),
                        format!("shift plus in-flight words exceed {bw} per link"),
                    ));
                }
            }
            MicroOp::ShiftRight { row } => {
                self.check_row(cycle, row)?;
                let u = self.at(cycle);
                let moving = u.right_words.keys().any(|(r, _)| *r == row);
                if !u.shift_right.insert(row) || moving {
                    return Err(self.violation(cycle, ViolationKind::LinkConflict, format!("row {row}"), "right links used twice"));
                }
            }
            MicroOp::FireMac { col, row, rows, operand, mode } => {
                self.check_col(cycle, col)?;
                if rows == 0 || row as usize + rows as usize > cfg.rows {
                    return Err(self.violation(cycle, ViolationKind::OutOfRange, format!("col {col}"), format!("rows {row}+{rows}")));
                }
                if let MacOperand::Slot(s) = operand {
                    self.check_slot(cycle, s)?;
                }
                if let MacMode::ElementWise { addr } = mode {
                    self.write_target(cycle, addr)?;
                    self.write_target(cycle, addr + rows as u32 - 1)?;
                }
            }
            MicroOp::DrainColumn { col, seg, .. } => {
                self.check_col(cycle, col)?;
                self.check_row(cycle, seg)?;
                self.accumulator(cycle, col, seg, false)?;
            }
            MicroOp::AccumulateWrite { col, span, seg, addr, .. } => {
                if span == 0 || col as usize + span as usize > cfg.cols {
                    return Err(self.violation(cycle, ViolationKind::OutOfRange, format!("col {col}"), format!("span {span}")));
                }
                self.check_row(cycle, seg)?;
                self.write_target(cycle, addr)?;
                let accs: BTreeSet<usize> = (col..col + span).map(|c| c as usize % cfg.accumulators).collect();
                for a in accs {
                    self.accumulator(cycle, a as u16, seg, true)?;
                }
            }
            MicroOp::FpRead { bank, addr, .. } => {
                match bank {
                    Bank::Top(c) => self.check_col(cycle, c)?,
                    Bank::Left(r) => self.check_row(cycle, r)?,
                }
                charges = self.read(cycle, bank, addr)?;
            }
            MicroOp::FpReinject { row, .. } => {
                self.check_row(cycle, row)?;
                let n = &mut self.reinject[row as usize];
                if *n == 0 {
                    return Err(self.violation(cycle, ViolationKind::Reinjection, format!("row {row}"), "buffer empty"));
                }
                *n -= 1;
            }
            MicroOp::FpOp { row, col, a, b, c, .. } => {
                self.check_row(cycle, row)?;
                self.check_col(cycle, col)?;
                for s in [Some(a), b, c].into_iter().flatten() {
                    if let super::schedule::FpSrc::Slot(slot) = s {
                        self.check_slot(cycle, slot)?;
                    }
                }
            }
            MicroOp::FpMove { row, col, to, .. } => {
                self.check_row(cycle, row)?;
                self.check_col(cycle, col)?;
                match to {
                    FpDest::Down => {
                        let dest = ((row as usize + 1) % cfg.rows) as u16;
                        self.down_word(cycle, col, dest)?;
                    }
                    FpDest::Right => {
                        if col as usize + 1 >= cfg.cols {
                            return Err(self.violation(cycle, ViolationKind::OutOfRange, format!("pe {row},{col}"), "no PE to the right"));
                        }
                        let u = self.at(cycle);
                        let n = u.right_words.entry((row, col + 1)).or_insert(0);
                        *n += 1;
                        if *n > 1 || u.shift_right.contains(&row) {
                            return Err(self.violation(cycle, ViolationKind::LinkConflict, format!("row {row}"), "right link used twice"));
                        }
                    }
                    FpDest::Reinject => {
                        if col as usize + 1 != cfg.cols {
                            return Err(self.violation(cycle, ViolationKind::OutOfRange, format!("pe {row},{col}"), "reinjection from inner column"));
                        }
                        self.reinject[row as usize] += 1;
                        let held: usize = self.reinject.iter().sum();
                        if held > cfg.rows {
                            return Err(self.violation(
                                cycle,
                                ViolationKind::Reinjection,
                                "reinjection buffer",
                                format!("{held} words exceed depth {}", cfg.rows),
                            ));
                        }
                    }
                }
            }
            MicroOp::FpWrite { row, col, addr, .. } => {
                self.check_row(cycle, row)?;
                self.check_col(cycle, col)?;
                self.write_target(cycle, addr)?;
            }
        }
        Ok(charges)
    }

    pub fn bank_totals(&self) -> BTreeMap<String, u64> {
        let top = self.top.iter().enumerate().map(|(c, l)| (Bank::Top(c as u16).label(), l.total()));
        let left = self.left.iter().enumerate().map(|(r, l)| (Bank::Left(r as u16).label(), l.total()));
        top.chain(left).collect()
    }

    fn peaks(&self) -> BTreeMap<String, f64> {
        let top = self
            .top
            .iter()
            .enumerate()
            .map(|(c, l)| (Bank::Top(c as u16).label(), l.peak() as f64 / l.budget() as f64));
        let left = self
            .left
            .iter()
            .enumerate()
            .map(|(r, l)| (Bank::Left(r as u16).label(), l.peak() as f64 / l.budget() as f64));
        top.chain(left).collect()
    }
}

/// Walks the schedule without executing it and reports the first
/// oversubscribed resource, or the peak per-bank read utilization.
pub fn assert_resources(schedule: &Schedule, cfg: &ArrayConfig) -> ResourceReport {
    let mut tracker = ResourceTracker::new(cfg, &schedule.layout);
    let mut report = ResourceReport::default();
    for t in &schedule.ops {
        report.ops_checked += 1;
        if let Err(v) = tracker.observe(t.cycle, &t.op) {
            report.violation = Some(v);
            break;
        }
    }
    report.peak_utilization = tracker.peaks();
    report.reads = tracker.bank_totals();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::schedule::WordFormat;

    fn layout() -> Layout {
        let mut l = Layout::default();
        l.push(RegionRole::Input, 16, 1, WordFormat::Real);
        l.push(RegionRole::Weight, 16, 1, WordFormat::Complex);
        l.push(RegionRole::Output, 16, 1, WordFormat::Real);
        l
    }

    #[test]
    fn empty_schedule_is_clean() {
        let r = assert_resources(&Schedule::default(), &ArrayConfig::default());
        assert!(r.is_clean());
        assert_eq!(r.max_utilization(), 0.0);
    }

    #[test]
    fn three_reads_on_budget_two() {
        let cfg = ArrayConfig::default();
        let mut s = Schedule { layout: layout(), ..Default::default() };
        // Two real injections fill the budget; a weight load is a third read.
        s.push(4, MicroOp::InjectTop { col: 0, src: Src::Mem(0) });
        s.push(4, MicroOp::LoadWeight { col: 0, row: 0, slot: 0, addr: 16, conj: false });
        let r = assert_resources(&s, &cfg);
        let v = r.violation.unwrap();
        assert_eq!(v.kind, ViolationKind::PortBudget);
        assert_eq!(v.cycle, 4);
        assert_eq!(v.resource, "top[0]");
    }

    #[test]
    fn complex_left_read_takes_two_cycles() {
        let cfg = ArrayConfig::default();
        let mut l = Layout::default();
        l.push(RegionRole::Input, 4, 1, WordFormat::Complex);
        let mut s = Schedule { layout: l, ..Default::default() };
        s.push(0, MicroOp::InjectLeft { row: 0, src: Src::Mem(0) });
        assert_eq!(assert_resources(&s, &cfg).violation.unwrap().kind, ViolationKind::PortBudget);
        let mut s2 = Schedule { layout: s.layout.clone(), ..Default::default() };
        s2.push(1, MicroOp::InjectLeft { row: 0, src: Src::Mem(0) });
        s2.push(3, MicroOp::InjectLeft { row: 0, src: Src::Mem(1) });
        let r = assert_resources(&s2, &cfg);
        assert!(r.is_clean(), "{:?}", r.violation);
        assert_eq!(r.reads["left[0]"], 4);
        assert_eq!(r.peak_utilization["left[0]"], 1.0);
    }

    #[test]
    fn weight_words_share_links_with_shifts() {
        let cfg = ArrayConfig::default();
        let mut s = Schedule { layout: layout(), ..Default::default() };
        s.push(0, MicroOp::LoadWeight { col: 1, row: 3, slot: 0, addr: 16, conj: false });
        // The weight crosses into row 2 at cycle 2.
        s.push(2, MicroOp::ShiftDown { col: 1 });
        let v = assert_resources(&s, &cfg).violation.unwrap();
        assert_eq!(v.kind, ViolationKind::ShiftBandwidth);
        assert_eq!(v.cycle, 2);
    }

    #[test]
    fn slot_beyond_depth() {
        let cfg = ArrayConfig::default();
        let mut s = Schedule { layout: layout(), ..Default::default() };
        s.push(0, MicroOp::FireMac { col: 0, row: 0, rows: 1, operand: MacOperand::Slot(8), mode: MacMode::Accumulate { lane: 0 } });
        assert_eq!(assert_resources(&s, &cfg).violation.unwrap().kind, ViolationKind::BufferDepth);
    }

    #[test]
    fn one_drain_per_accumulator_segment_per_cycle() {
        let cfg = ArrayConfig::default();
        let mut s = Schedule { layout: layout(), ..Default::default() };
        s.push(9, MicroOp::DrainColumn { col: 2, seg: 0, lane: 0, entry: 0 });
        s.push(9, MicroOp::DrainColumn { col: 2, seg: 4, lane: 1, entry: 1 });
        assert!(assert_resources(&s, &cfg).is_clean());
        s.push(9, MicroOp::DrainColumn { col: 2, seg: 4, lane: 2, entry: 2 });
        assert_eq!(assert_resources(&s, &cfg).violation.unwrap().kind, ViolationKind::Accumulator);
    }

    #[test]
    fn unsorted_is_reported() {
        let cfg = ArrayConfig::default();
        let mut s = Schedule { layout: layout(), ..Default::default() };
        s.push(5, MicroOp::ShiftDown { col: 0 });
        s.push(4, MicroOp::ShiftDown { col: 0 });
        assert_eq!(assert_resources(&s, &cfg).violation.unwrap().kind, ViolationKind::Unsorted);
    }
}
