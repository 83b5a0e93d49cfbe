//! The array itself: configuration, micro-op schedules, port and link
//! accounting, and the cycle-level simulator.

mod audit;
mod config;
mod ports;
mod resources;
mod schedule;
mod sim;
mod weight_load;

use thiserror::Error;

use crate::numeric::NumericError;

pub use audit::{audit_trace, TraceAudit};
pub use config::{ArrayConfig, MacLatency, FP_RECIP_LATENCY};
pub use ports::{Charge, PortLedger};
pub use resources::{assert_resources, ResourceReport, ResourceTracker, Violation, ViolationKind};
pub use schedule::{
    Bank, FpDest, FpKind, FpSrc, Layout, MacMode, MacOperand, MicroOp, Region, RegionRole, Schedule, Src, Timed,
    WordFormat,
};
pub use sim::{simulate, SimResult, TraceEvent, FP_PIVOT_EPS};
pub use weight_load::{simulate_region_load, simulate_weight_load, weight_load_latency};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid array configuration: {0}")]
    Config(String),
    #[error("schedule is empty")]
    EmptySchedule,
    #[error("schedule never writes an output")]
    NoOutput,
    #[error("resource violation: {0}")]
    Resource(Violation),
    #[error("weight slot {slot} of PE ({row},{col}) overwritten at cycle {cycle} while partial sums are open")]
    WeightMutation { cycle: u64, row: usize, col: usize, slot: usize },
    #[error("register file of PE ({row},{col}) overflows at cycle {cycle}")]
    BufferOverflow { cycle: u64, row: usize, col: usize },
    #[error("multiplier of PE ({row},{col}) is still busy at cycle {cycle}")]
    StructuralHazard { cycle: u64, row: usize, col: usize },
    #[error("lane {lane} of column {col} drained at cycle {cycle}, ready at {ready}")]
    DrainBeforeReady { cycle: u64, col: usize, lane: u32, ready: u64 },
    #[error("column {col} drains overlapping partial-sum segments at cycle {cycle}")]
    SegmentOverlap { cycle: u64, col: usize },
    #[error("input register of PE ({row},{col}) written twice at cycle {cycle}")]
    InputConflict { cycle: u64, row: usize, col: usize },
    #[error("missing operand at cycle {cycle}: {what}")]
    MissingOperand { cycle: u64, what: String },
    #[error("operand mismatch: {0}")]
    OperandMismatch(String),
    #[error("singular pivot in PE ({row},{col}) at cycle {cycle}")]
    Singular { cycle: u64, row: usize, col: usize },
    #[error("non-positive pivot in PE ({row},{col}) at cycle {cycle}")]
    NotPositiveDefinite { cycle: u64, row: usize, col: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

impl SimError {
    /// Whether the schedule broke a hardware resource rule (as opposed to
    /// a numeric or configuration problem).
    pub fn is_resource_violation(&self) -> bool {
        matches!(
            self,
            SimError::Resource(_)
                | SimError::WeightMutation { .. }
                | SimError::BufferOverflow { .. }
                | SimError::StructuralHazard { .. }
                | SimError::DrainBeforeReady { .. }
                | SimError::InputConflict { .. }
                | SimError::SegmentOverlap { .. }
        )
    }
}
