use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::numeric::DType;

/// SRAM bank that a read is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bank {
    Top(u16),
    Left(u16),
}

impl Bank {
    pub fn label(self) -> String {
        match self {
            Bank::Top(c) => format!("top[{c}]"),
            Bank::Left(r) => format!("left[{r}]"),
        }
    }
}

/// Source of a word injected at an array edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Src {
    Mem(u32),
    /// A zero bubble; costs no read.
    Zero { complex: bool },
}

/// Second multiplier operand of a fixed-point MAC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacOperand {
    Slot(u8),
    /// The latched input times its own conjugate.
    SelfConj,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacMode {
    /// Product joins the column partial sum identified by `lane`.
    Accumulate { lane: u32 },
    /// Product is rounded and written to `addr` when the multiply completes.
    ElementWise { addr: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpKind {
    /// a * b
    Mul,
    /// a / b
    Div,
    /// a - b * c
    MulSub,
    /// 1 / a
    Recip,
    /// 1 / sqrt(a)
    InvSqrt,
}

impl FpKind {
    pub fn arity(self) -> usize {
        match self {
            FpKind::Recip | FpKind::InvSqrt => 1,
            FpKind::Mul | FpKind::Div => 2,
            FpKind::MulSub => 3,
        }
    }

    pub fn is_reciprocal_class(self) -> bool {
        matches!(self, FpKind::Div | FpKind::Recip | FpKind::InvSqrt)
    }
}

/// Float operand source inside a PE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpSrc {
    /// Register `tag`; `take` frees it once read.
    Reg { tag: u32, take: bool },
    Slot(u8),
    Const(f64),
}

/// Endpoint of a float register move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpDest {
    /// Next PE down, wrapping from the bottom row to the top.
    Down,
    Right,
    /// Reinjection buffer of the PE's row (only from the last column).
    Reinject,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MicroOp {
    /// Reads `addr` from the column's top bank and shifts it down the
    /// column chain to `row`, landing in `slot`.
    LoadWeight { col: u16, row: u16, slot: u8, addr: u32, conj: bool },
    InjectTop { col: u16, src: Src },
    InjectLeft { row: u16, src: Src },
    /// Every input register of the column moves one row down.
    ShiftDown { col: u16 },
    /// Every input register of the row moves one column right.
    ShiftRight { row: u16 },
    /// Fires rows `row..row + rows` of a column together. In element-wise
    /// mode row `row + i` writes `addr + i`.
    FireMac { col: u16, row: u16, rows: u16, operand: MacOperand, mode: MacMode },
    /// Adds the column's partial sum for `lane` into accumulator entry
    /// `entry`. `seg` is the first row of the partial-sum segment the lane
    /// occupies; segments drained in the same cycle must not overlap.
    DrainColumn { col: u16, seg: u16, lane: u32, entry: u32 },
    /// Sums `entry` over the accumulators of columns `col..col + span`,
    /// rounds, writes `addr` and clears the entries.
    AccumulateWrite { col: u16, span: u16, seg: u16, entry: u32, addr: u32 },
    /// Reads a float word into register `tag` of the bank's edge PE
    /// (row 0 for a top bank, column 0 for a left bank).
    FpRead { bank: Bank, addr: u32, tag: u32 },
    /// Reinjects the oldest float word of a row's buffer into register
    /// `tag` of that row's first PE.
    FpReinject { row: u16, tag: u32 },
    FpOp { row: u16, col: u16, kind: FpKind, dst: u32, a: FpSrc, b: Option<FpSrc>, c: Option<FpSrc> },
    FpMove { row: u16, col: u16, tag: u32, to: FpDest, to_tag: u32, keep: bool },
    FpWrite { row: u16, col: u16, tag: u32, addr: u32, take: bool },
}

impl MicroOp {
    pub fn name(&self) -> &'static str {
        match self {
            MicroOp::LoadWeight { .. } => "load_weight",
            MicroOp::InjectTop { .. } => "inject_top",
            MicroOp::InjectLeft { .. } => "inject_left",
            MicroOp::ShiftDown { .. } => "shift_down",
            MicroOp::ShiftRight { .. } => "shift_right",
            MicroOp::FireMac { .. } => "fire_mac",
            MicroOp::DrainColumn { .. } => "drain_column",
            MicroOp::AccumulateWrite { .. } => "accumulate_write",
            MicroOp::FpRead { .. } => "fp_read",
            MicroOp::FpReinject { .. } => "fp_reinject",
            MicroOp::FpOp { .. } => "fp_op",
            MicroOp::FpMove { .. } => "fp_move",
            MicroOp::FpWrite { .. } => "fp_write",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timed {
    pub cycle: u64,
    #[serde(flatten)]
    pub op: MicroOp,
}

/// Storage format of a memory region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordFormat {
    Real,
    Complex,
    Float,
}

impl WordFormat {
    pub fn from_dtype(d: DType) -> Self {
        match d {
            DType::Real => WordFormat::Real,
            DType::Complex => WordFormat::Complex,
        }
    }

    /// Read-port units consumed by one element.
    pub fn read_units(self) -> u8 {
        match self {
            WordFormat::Complex => 2,
            WordFormat::Real | WordFormat::Float => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionRole {
    Input,
    Weight,
    Output,
}

/// A contiguous run of element addresses holding one operand, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub role: RegionRole,
    pub base: u32,
    pub rows: usize,
    pub cols: usize,
    pub format: WordFormat,
}

impl Region {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base && ((addr - self.base) as usize) < self.len()
    }

    pub fn addr(&self, r: usize, c: usize) -> u32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.base + (r * self.cols + c) as u32
    }
}

/// Memory map shared by the mapper and the simulator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub regions: Vec<Region>,
}

impl Layout {
    /// Appends a region after the existing ones and returns it.
    pub fn push(&mut self, role: RegionRole, rows: usize, cols: usize, format: WordFormat) -> Region {
        let base = self.regions.iter().map(|r| r.base as usize + r.len()).max().unwrap_or(0) as u32;
        let region = Region { role, base, rows, cols, format };
        self.regions.push(region);
        region
    }

    pub fn total_len(&self) -> usize {
        self.regions.iter().map(|r| r.base as usize + r.len()).max().unwrap_or(0)
    }

    pub fn region_of(&self, addr: u32) -> Option<&Region> {
        self.regions.iter().find(|r| r.contains(addr))
    }

    pub fn find(&self, role: RegionRole) -> Option<&Region> {
        self.regions.iter().find(|r| r.role == role)
    }

    pub fn read_units(&self, addr: u32) -> Option<u8> {
        self.region_of(addr).map(|r| r.format.read_units())
    }
}

/// A compiled cycle-level program.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub layout: Layout,
    pub ops: Vec<Timed>,
    /// Tradeoffs the mapper took (reloads, fallbacks).
    pub notes: Vec<String>,
}

impl Schedule {
    pub fn push(&mut self, cycle: u64, op: MicroOp) {
        self.ops.push(Timed { cycle, op });
    }

    /// Stable sort by cycle; ops within one cycle keep emission order.
    pub fn sort(&mut self) {
        self.ops.sort_by_key(|t| t.cycle);
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn last_cycle(&self) -> Option<u64> {
        self.ops.iter().map(|t| t.cycle).max()
    }

    /// One JSON object per line: the layout header, then each op.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({ "layout": self.layout, "notes": self.notes });
        writeln!(out, "{header}").expect("write to string");
        for t in &self.ops {
            writeln!(out, "{}", serde_json::to_string(t).expect("ops serialize")).expect("write to string");
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Schedule, serde_json::Error> {
        #[derive(Deserialize)]
        struct Header {
            layout: Layout,
            notes: Vec<String>,
        }
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = match lines.next() {
            Some(l) => serde_json::from_str(l)?,
            None => return Ok(Schedule::default()),
        };
        let ops = lines.map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Schedule { layout: header.layout, ops, notes: header.notes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let mut l = Layout::default();
        let a = l.push(RegionRole::Input, 4, 2, WordFormat::Complex);
        let b = l.push(RegionRole::Weight, 2, 1, WordFormat::Real);
        assert_eq!(a.base, 0);
        assert_eq!(b.base, 8);
        assert_eq!(l.total_len(), 10);
        assert_eq!(l.read_units(3), Some(2));
        assert_eq!(l.read_units(9), Some(1));
        assert_eq!(l.read_units(10), None);
        assert_eq!(a.addr(3, 1), 7);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut s = Schedule::default();
        s.layout.push(RegionRole::Input, 2, 2, WordFormat::Float);
        s.notes.push("reload".into());
        s.push(0, MicroOp::LoadWeight { col: 1, row: 2, slot: 0, addr: 3, conj: true });
        s.push(1, MicroOp::InjectTop { col: 0, src: Src::Zero { complex: true } });
        s.push(
            2,
            MicroOp::FpOp {
                row: 0,
                col: 0,
                kind: FpKind::MulSub,
                dst: 4,
                a: FpSrc::Reg { tag: 1, take: true },
                b: Some(FpSrc::Slot(0)),
                c: Some(FpSrc::Const(0.5)),
            },
        );
        s.push(3, MicroOp::FpRead { bank: Bank::Left(2), addr: 1, tag: 9 });
        let text = s.to_jsonl();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().contains("\"op\":\"load_weight\""));
        assert_eq!(Schedule::from_jsonl(&text).unwrap(), s);
    }
}
