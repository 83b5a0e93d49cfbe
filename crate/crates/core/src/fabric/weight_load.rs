//! Time for the last PE of a column to receive its weight.
//!
//! A column of `r` PEs is split into `n_j` injection regions of
//! `β = ⌈r / n_j⌉` PEs. Each region is fed from its head through a shift
//! chain moving `b_c` words per cycle, so a region is filled in
//! `γ = ⌈β / b_c⌉` pumps. Regions are reserved as whole subgroups of `b_c`
//! slots, which is what the closed form counts.

/// Closed-form weight-load latency in cycles.
pub fn weight_load_latency(rows: usize, injection_points: usize, bandwidth: usize) -> u64 {
    assert!(rows >= 1 && (1..=rows).contains(&injection_points) && bandwidth >= 1, "invalid weight-load parameters");
    let beta = rows.div_ceil(injection_points) as u64;
    let b = bandwidth as u64;
    let gamma = beta.div_ceil(b);
    gamma + (gamma - 1) * b + (b - 1)
}

#[derive(Clone, Copy, Debug)]
struct InFlight {
    pos: usize,
    dest: usize,
}

/// Cycle-stepped model of loading one injection region.
///
/// Pump `k` (cycle `k`, counting from 1) pushes the `k`-th subgroup of
/// `bandwidth` words into the region head, nearest destinations first.
/// Every cycle each word not yet at its slot advances one hop if the link
/// ahead still has capacity; a link carries at most `bandwidth` words per
/// cycle. Returns the cycle in which the last word lands.
pub fn simulate_region_load(slots: usize, bandwidth: usize) -> u64 {
    let pumps = slots.div_ceil(bandwidth);
    let mut waiting: Vec<usize> = (0..slots).collect();
    waiting.reverse();
    let mut moving: Vec<InFlight> = Vec::new();
    let mut landed = 0usize;
    let mut last = 0u64;
    let mut cycle = 0u64;
    while landed < slots {
        cycle += 1;
        // Words already in the chain advance first, farthest destination first.
        moving.sort_by(|a, b| b.dest.cmp(&a.dest).then(b.pos.cmp(&a.pos)));
        let mut link_use = vec![0usize; slots];
        for w in moving.iter_mut() {
            let link = w.pos + 1;
            if link_use[link] < bandwidth {
                link_use[link] += 1;
                w.pos = link;
            }
        }
        if cycle as usize <= pumps {
            for _ in 0..bandwidth {
                if let Some(dest) = waiting.pop() {
                    moving.push(InFlight { pos: 0, dest });
                }
            }
        }
        moving.retain(|w| {
            if w.pos == w.dest {
                landed += 1;
                last = cycle;
                false
            } else {
                true
            }
        });
    }
    last
}

/// Discrete-event weight-load latency of a whole column: all regions load
/// in parallel, each padded to whole subgroups.
pub fn simulate_weight_load(rows: usize, injection_points: usize, bandwidth: usize) -> u64 {
    assert!(rows >= 1 && (1..=rows).contains(&injection_points) && bandwidth >= 1, "invalid weight-load parameters");
    let beta = rows.div_ceil(injection_points);
    let padded = beta.div_ceil(bandwidth) * bandwidth;
    (0..injection_points)
        .map(|region| {
            let real = rows.saturating_sub(region * beta).min(beta);
            if real == 0 {
                0
            } else {
                simulate_region_load(padded, bandwidth)
            }
        })
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert_eq!(weight_load_latency(8, 8, 1), 1);
        assert_eq!(weight_load_latency(8, 1, 1), 15);
        assert_eq!(weight_load_latency(8, 2, 2), 5);
    }

    #[test]
    fn des_matches_examples() {
        assert_eq!(simulate_weight_load(8, 8, 1), 1);
        assert_eq!(simulate_weight_load(8, 1, 1), 15);
        assert_eq!(simulate_weight_load(8, 2, 2), 5);
    }

    #[test]
    fn single_word_region() {
        assert_eq!(simulate_region_load(1, 1), 1);
        assert_eq!(simulate_region_load(4, 4), 4);
    }

    #[test]
    fn formula_agrees_with_des_exhaustively() {
        for r in 1..=16 {
            for nj in 1..=r {
                for bc in [1, 2, 4] {
                    assert_eq!(weight_load_latency(r, nj, bc), simulate_weight_load(r, nj, bc), "r={r} nj={nj} bc={bc}");
                }
            }
        }
    }
}
