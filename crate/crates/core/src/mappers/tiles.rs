use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::fabric::ArrayConfig;

/// A set of weight tiles resident in PE slots at the same time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGroup {
    pub k_tiles: Range<usize>,
    pub n_tiles: Range<usize>,
    /// First slot of the buffer half this group lives in.
    pub slot_base: usize,
}

impl TileGroup {
    pub fn slot(&self, k_tile: usize, n_tile: usize) -> usize {
        debug_assert!(self.k_tiles.contains(&k_tile) && self.n_tiles.contains(&n_tile));
        self.slot_base + (k_tile - self.k_tiles.start) * self.n_tiles.len() + (n_tile - self.n_tiles.start)
    }

    pub fn len(&self) -> usize {
        self.k_tiles.len() * self.n_tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How a `K x N` weight matrix is cut into `rows x cols` tiles and
/// scheduled through the per-PE slot buffers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    /// Independent row groups stacked in one column when `K` fits.
    pub copies: usize,
    /// Rows spanned by one copy.
    pub rows_per_copy: usize,
    pub k_tiles: usize,
    pub n_tiles: usize,
    /// Slot halves in rotation: 1 when everything is resident or the
    /// buffer is too shallow to split, 2 for double buffering.
    pub buffers: usize,
    pub groups: Vec<TileGroup>,
}

impl TilePlan {
    /// Rows of the weight tile `k_tile` that carry real taps.
    pub fn valid_rows(&self, k: usize, k_tile: usize) -> usize {
        if self.copies > 1 {
            k
        } else {
            (k - k_tile * self.rows_per_copy).min(self.rows_per_copy)
        }
    }

    pub fn max_group_width(&self) -> usize {
        self.groups.iter().map(|g| g.n_tiles.len()).max().unwrap_or(0)
    }

    /// Index of the group each group must wait on before reusing its slots.
    pub fn predecessor(&self, g: usize) -> Option<usize> {
        g.checked_sub(self.buffers)
    }
}

pub fn plan_tiles(k: usize, n: usize, cfg: &ArrayConfig) -> TilePlan {
    let (r, c, depth) = (cfg.rows, cfg.cols, cfg.pe_buffer_depth);
    let (copies, rows_per_copy) = if k <= r { (r / k, k) } else { (1, r) };
    let k_tiles = k.div_ceil(rows_per_copy.max(1)).max(1);
    let k_tiles = if copies > 1 { 1 } else { k_tiles };
    let n_tiles = n.div_ceil(c);
    if k_tiles * n_tiles <= depth {
        return TilePlan {
            copies,
            rows_per_copy,
            k_tiles,
            n_tiles,
            buffers: 1,
            groups: vec![TileGroup { k_tiles: 0..k_tiles, n_tiles: 0..n_tiles, slot_base: 0 }],
        };
    }
    let buffers = if depth >= 2 { 2 } else { 1 };
    let half = depth / buffers;
    let (n_set, k_set) = if n_tiles <= half { (n_tiles, half / n_tiles) } else { (half, 1) };
    let mut groups = Vec::new();
    for n0 in (0..n_tiles).step_by(n_set) {
        for k0 in (0..k_tiles).step_by(k_set) {
            let slot_base = (groups.len() % buffers) * half;
            groups.push(TileGroup {
                k_tiles: k0..(k0 + k_set).min(k_tiles),
                n_tiles: n0..(n0 + n_set).min(n_tiles),
                slot_base,
            });
        }
    }
    TilePlan { copies, rows_per_copy, k_tiles, n_tiles, buffers, groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_reduction_stacks_copies() {
        let p = plan_tiles(4, 8, &ArrayConfig::default());
        assert_eq!((p.copies, p.rows_per_copy, p.k_tiles, p.n_tiles), (2, 4, 1, 1));
        assert_eq!(p.groups.len(), 1);
    }

    #[test]
    fn long_reduction_double_buffers() {
        let p = plan_tiles(1024, 64, &ArrayConfig::default());
        assert_eq!((p.k_tiles, p.n_tiles, p.buffers), (128, 8, 2));
        assert_eq!(p.groups[0].n_tiles, 0..4);
        assert_eq!(p.groups[1].slot_base, 4);
        assert_eq!(p.groups.len(), 256);
    }

    proptest! {
        #[test]
        fn groups_cover_every_tile_once(k in 1usize..200, n in 1usize..100, depth in 1usize..10) {
            let cfg = ArrayConfig { pe_buffer_depth: depth, ..ArrayConfig::default() };
            let p = plan_tiles(k, n, &cfg);
            let mut seen = vec![0u8; p.k_tiles * p.n_tiles];
            for g in &p.groups {
                prop_assert!(g.slot_base + g.len() <= depth);
                for kt in g.k_tiles.clone() {
                    for nt in g.n_tiles.clone() {
                        seen[kt * p.n_tiles + nt] += 1;
                    }
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
            let rows: usize = (0..p.k_tiles).map(|t| p.valid_rows(k, t)).sum();
            prop_assert_eq!(rows, k);
        }
    }
}
