use serde::{Deserialize, Serialize};

use super::SimError;

/// Multiplier occupancy, in cycles, per operand-type pairing
/// (streamed input type x stationary weight type).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacLatency {
    pub real_real: u8,
    pub real_complex: u8,
    pub complex_real: u8,
    pub complex_complex: u8,
}

impl Default for MacLatency {
    fn default() -> Self {
        MacLatency { real_real: 1, real_complex: 2, complex_real: 2, complex_complex: 4 }
    }
}

impl MacLatency {
    pub fn get(&self, input_complex: bool, weight_complex: bool) -> u8 {
        match (input_complex, weight_complex) {
            (false, false) => self.real_real,
            (false, true) => self.real_complex,
            (true, false) => self.complex_real,
            (true, true) => self.complex_complex,
        }
    }
}

/// Latency of the reciprocal-class float ops (reciprocal, division,
/// inverse square root). Multiplies take `mac_latency.real_real`.
pub const FP_RECIP_LATENCY: u8 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    /// Read-port units per cycle of each column (top) bank.
    pub top_reads_per_cycle: u8,
    /// Read-port units per cycle of each row (left) bank.
    pub left_reads_per_cycle: u8,
    /// Weight slots per PE.
    pub pe_buffer_depth: usize,
    pub accumulators: usize,
    pub clock_ghz: f64,
    /// Words per cycle across each vertical PE-to-PE link.
    pub column_shift_bandwidth: u8,
    /// Weight injection points per column.
    pub injection_points: usize,
    pub mac_latency: MacLatency,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            rows: 8,
            cols: 8,
            top_reads_per_cycle: 2,
            left_reads_per_cycle: 1,
            pe_buffer_depth: 8,
            accumulators: 8,
            clock_ghz: 1.0,
            column_shift_bandwidth: 1,
            injection_points: 1,
            mac_latency: MacLatency::default(),
        }
    }
}

impl ArrayConfig {
    /// Default configuration resized to `rows x cols`.
    pub fn with_dims(rows: usize, cols: usize) -> Self {
        ArrayConfig { rows, cols, accumulators: cols, ..ArrayConfig::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("array must be at least 1x1, got {}x{}", self.rows, self.cols));
        }
        if self.rows > u16::MAX as usize || self.cols > u16::MAX as usize {
            return bad("array dimensions exceed 65535".into());
        }
        if self.top_reads_per_cycle == 0 || self.left_reads_per_cycle == 0 {
            return bad("read budgets must be at least 1".into());
        }
        if self.pe_buffer_depth == 0 || self.pe_buffer_depth > u8::MAX as usize {
            return bad(format!("pe_buffer_depth {} outside 1..=255", self.pe_buffer_depth));
        }
        if self.accumulators == 0 {
            return bad("at least one accumulator is required".into());
        }
        if self.column_shift_bandwidth == 0 {
            return bad("column shift bandwidth must be at least 1".into());
        }
        if self.injection_points == 0 || self.injection_points > self.rows {
            return bad(format!("injection points {} outside 1..={}", self.injection_points, self.rows));
        }
        if !(self.clock_ghz.is_finite() && self.clock_ghz > 0.0) {
            return bad("clock must be positive".into());
        }
        let m = self.mac_latency;
        for l in [m.real_real, m.real_complex, m.complex_real, m.complex_complex] {
            if ![1, 2, 4].contains(&l) {
                return bad(format!("mac latency {l} not in {{1, 2, 4}}"));
            }
        }
        Ok(())
    }

    pub fn pe_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Size of the injection region served by each injection point.
    pub fn region_size(&self) -> usize {
        self.rows.div_ceil(self.injection_points)
    }

    /// First row of the injection region containing `row`.
    pub fn region_head(&self, row: usize) -> usize {
        (row / self.region_size()) * self.region_size()
    }

    /// Float register entries per PE (buffered operands plus the two pass
    /// registers of each weight slot pair).
    pub fn register_capacity(&self) -> usize {
        2 * self.pe_buffer_depth
    }

    pub fn read_budget(&self, top: bool) -> u8 {
        if top {
            self.top_reads_per_cycle
        } else {
            self.left_reads_per_cycle
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ArrayConfig::default();
        c.validate().unwrap();
        assert_eq!(c.pe_count(), 64);
        assert_eq!(c.region_size(), 8);
        assert_eq!(c.mac_latency.get(true, true), 4);
        assert_eq!(c.mac_latency.get(false, true), 2);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ArrayConfig::default();
        c.injection_points = 9;
        assert!(c.validate().is_err());
        let mut c = ArrayConfig::default();
        c.mac_latency.complex_complex = 3;
        assert!(c.validate().is_err());
        assert!(ArrayConfig::with_dims(0, 4).validate().is_err());
    }

    #[test]
    fn regions() {
        let mut c = ArrayConfig::default();
        c.injection_points = 3;
        assert_eq!(c.region_size(), 3);
        assert_eq!(c.region_head(7), 6);
        assert_eq!(c.region_head(2), 0);
    }
}
