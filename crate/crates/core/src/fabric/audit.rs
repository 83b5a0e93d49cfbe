//! Independent check of a recorded trace: replays read and weight events
//! without the simulator's own bookkeeping.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::{ArrayConfig, TraceEvent};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TraceAudit {
    pub events: usize,
    pub read_units: u64,
    /// (bank, cycle) pairs whose reads exceed the bank budget.
    pub port_violations: usize,
    /// Weights landing on a slot that an undrained partial sum used.
    pub weight_mutations: usize,
}

impl TraceAudit {
    pub fn is_clean(&self) -> bool {
        self.port_violations == 0 && self.weight_mutations == 0
    }
}

fn parse_pe(unit: &str) -> Option<(u64, u64)> {
    let inner = unit.strip_prefix("pe[")?.strip_suffix(']')?;
    let (r, c) = inner.split_once(',')?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

/// Replays `trace` in emission order.
pub fn audit_trace(trace: &[TraceEvent], cfg: &ArrayConfig) -> TraceAudit {
    let mut audit = TraceAudit { events: trace.len(), ..TraceAudit::default() };
    let mut reads: BTreeMap<(&str, u64), u64> = BTreeMap::new();
    // Open (column, lane) partial sums per (pe, slot), and the slots each lane used.
    let mut open: HashMap<((u64, u64), u64), HashSet<(u64, u64)>> = HashMap::new();
    let mut lane_slots: HashMap<(u64, u64), Vec<((u64, u64), u64)>> = HashMap::new();
    for ev in trace {
        let value = ev.value.as_ref();
        match ev.op.as_str() {
            "read" => {
                let units = value.and_then(|v| v.as_u64()).unwrap_or(0);
                audit.read_units += units;
                *reads.entry((ev.unit.as_str(), ev.cycle)).or_insert(0) += units;
            }
            "fire" => {
                let (Some(pe), Some(v)) = (parse_pe(&ev.unit), value) else { continue };
                let (Some(slot), Some(lane)) = (v["slot"].as_u64(), v["lane"].as_u64()) else { continue };
                let key = (pe.1, lane);
                open.entry((pe, slot)).or_default().insert(key);
                lane_slots.entry(key).or_default().push((pe, slot));
            }
            "drain" => {
                let Some(v) = value else { continue };
                let (Some(col), Some(lane)) = (v["col"].as_u64(), v["lane"].as_u64()) else { continue };
                for ps in lane_slots.remove(&(col, lane)).unwrap_or_default() {
                    if let Some(set) = open.get_mut(&ps) {
                        set.remove(&(col, lane));
                    }
                }
            }
            "weight" => {
                let (Some(pe), Some(slot)) = (parse_pe(&ev.unit), value.and_then(|v| v["slot"].as_u64())) else { continue };
                if open.get(&(pe, slot)).is_some_and(|s| !s.is_empty()) {
                    audit.weight_mutations += 1;
                }
            }
            _ => {}
        }
    }
    for ((bank, _), units) in reads {
        let budget = if bank.starts_with("top") { cfg.top_reads_per_cycle } else { cfg.left_reads_per_cycle };
        if units > budget as u64 {
            audit.port_violations += 1;
        }
    }
    audit
}
