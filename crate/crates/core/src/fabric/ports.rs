/// Per-cycle read-port usage of one SRAM bank.
///
/// A read that needs more units than the per-cycle budget is spread over
/// the preceding cycles so that it completes in the cycle it is issued.
#[derive(Clone, Debug)]
pub struct PortLedger {
    budget: u8,
    used: Vec<u8>,
    total: u64,
}

/// Units charged to one cycle by a single read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Charge {
    pub cycle: u64,
    pub units: u8,
}

impl PortLedger {
    pub fn new(budget: u8) -> Self {
        PortLedger { budget, used: Vec::new(), total: 0 }
    }

    pub fn budget(&self) -> u8 {
        self.budget
    }

    pub fn used(&self, cycle: u64) -> u8 {
        self.used.get(cycle as usize).copied().unwrap_or(0)
    }

    /// Cycle-by-cycle split of a read of `units` finishing at `cycle`, or
    /// `None` if it would have to start before cycle 0.
    pub fn split(&self, cycle: u64, units: u8) -> Option<Vec<Charge>> {
        let span = (units as u64).div_ceil(self.budget as u64).max(1);
        if span > cycle + 1 {
            return None;
        }
        let mut left = units;
        let mut out = Vec::with_capacity(span as usize);
        let mut c = cycle;
        while left > 0 {
            let u = left.min(self.budget);
            out.push(Charge { cycle: c, units: u });
            left -= u;
            c = c.wrapping_sub(1);
        }
        Some(out)
    }

    pub fn fits(&self, cycle: u64, units: u8) -> bool {
        match self.split(cycle, units) {
            Some(parts) => parts.iter().all(|p| self.used(p.cycle) as u16 + p.units as u16 <= self.budget as u16),
            None => false,
        }
    }

    /// Records the read. On a budget overrun the first overrun cycle is
    /// returned and nothing is recorded.
    pub fn charge(&mut self, cycle: u64, units: u8) -> Result<Vec<Charge>, u64> {
        let parts = self.split(cycle, units).ok_or(0u64)?;
        if let Some(p) = parts.iter().find(|p| self.used(p.cycle) as u16 + p.units as u16 > self.budget as u16) {
            return Err(p.cycle);
        }
        for p in &parts {
            let i = p.cycle as usize;
            if self.used.len() <= i {
                self.used.resize(i + 1, 0);
            }
            self.used[i] += p.units;
        }
        self.total += units as u64;
        Ok(parts)
    }

    /// Earliest cycle `>= from` at which the read fits.
    pub fn first_fit(&self, from: u64, units: u8) -> u64 {
        let mut c = from;
        while !self.fits(c, units) {
            c += 1;
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn peak(&self) -> u8 {
        self.used.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cycle_reads() {
        let mut p = PortLedger::new(2);
        assert!(p.charge(5, 2).is_ok());
        assert!(!p.fits(5, 1));
        assert_eq!(p.charge(5, 1), Err(5));
        assert_eq!(p.first_fit(5, 1), 6);
        assert_eq!(p.total(), 2);
    }

    #[test]
    fn wide_read_spreads_backwards() {
        let mut p = PortLedger::new(1);
        let parts = p.charge(3, 2).unwrap();
        assert_eq!(parts, vec![Charge { cycle: 3, units: 1 }, Charge { cycle: 2, units: 1 }]);
        assert!(!p.fits(2, 1));
        assert!(p.fits(1, 1));
        assert!(!p.fits(0, 2));
        assert_eq!(p.peak(), 1);
    }
}
