//! Tile-based alpha blending: binning, forward render and analytic backward.
//!
//! Work is split per tile and every per-Gaussian quantity is first written to
//! a buffer aligned with the Gaussian/tile pair list, then reduced in pair
//! order. Results are therefore identical for any number of worker threads.

pub mod backward;
pub mod binning;
pub mod forward;

pub use backward::{blend_backward, SplatGrad};
pub use binning::{bin_aabb, bin_compact, compact_threshold, Binning, GridGeometry};
pub use forward::{blend_forward, RenderOutputs};

use crate::camera::ProjectedGaussian;
use crate::error::Result;
use crate::math::Real;

/// Smallest alpha that contributes to a pixel.
pub const ALPHA_CUTOFF: f64 = 1.0 / 255.0;
pub const ALPHA_MAX: f64 = 0.99;
/// Blending stops once transmittance falls below this.
pub const T_MIN: f64 = 1e-4;
pub const DEFAULT_TILE_SIZE: usize = 16;

/// Per-tile, depth-sorted lists of projected Gaussian indices (CSR layout).
#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid {
    pub geom: GridGeometry,
    /// `offsets[t]..offsets[t + 1]` indexes `ids` for tile `t`.
    pub offsets: Vec<usize>,
    pub ids: Vec<u32>,
}

impl TileGrid {
    pub fn build<F: Real>(
        projected: &[ProjectedGaussian<F>],
        width: usize,
        height: usize,
        tile_size: usize,
        binning: Binning,
    ) -> Result<Self> {
        let geom = GridGeometry::new(width, height, tile_size);
        let mut order: Vec<u32> = (0..projected.len() as u32).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (&projected[a as usize], &projected[b as usize]);
            pa.depth
                .partial_cmp(&pb.depth)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(pa.source_index.cmp(&pb.source_index))
        });
        let mut per_tile: Vec<Vec<u32>> = vec![Vec::new(); geom.num_tiles()];
        for &i in &order {
            binning::bin(&projected[i as usize], &geom, binning, |t| per_tile[t as usize].push(i))?;
        }
        let mut offsets = Vec::with_capacity(per_tile.len() + 1);
        offsets.push(0);
        let mut ids = Vec::with_capacity(per_tile.iter().map(Vec::len).sum());
        for list in per_tile {
            ids.extend_from_slice(&list);
            offsets.push(ids.len());
        }
        Ok(Self { geom, offsets, ids })
    }

    #[inline]
    pub fn tile(&self, t: usize) -> &[u32] {
        &self.ids[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn num_pairs(&self) -> usize {
        self.ids.len()
    }

    /// Pixel bounds `(x0, x1, y0, y1)` (exclusive ends) of tile `t`.
    #[inline]
    pub fn tile_bounds(&self, t: usize) -> (usize, usize, usize, usize) {
        let g = &self.geom;
        let tx = t % g.tiles_x;
        let ty = t / g.tiles_x;
        (
            tx * g.tile_size,
            ((tx + 1) * g.tile_size).min(g.width),
            ty * g.tile_size,
            ((ty + 1) * g.tile_size).min(g.height),
        )
    }

    /// Number of tiles each projected Gaussian was assigned to.
    pub fn tiles_per_gaussian(&self, n_projected: usize) -> Vec<u32> {
        let mut out = vec![0u32; n_projected];
        for &id in &self.ids {
            out[id as usize] += 1;
        }
        out
    }
}

/// Total number of Gaussian/tile pairs in a grid.
pub fn count_pairs(grid: &TileGrid) -> usize {
    grid.num_pairs()
}

/// Per-Gaussian count of high-error pixels it contributed to in one view.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FootprintCounter {
    /// Indexed like the projected Gaussian slice the render was given.
    pub counts: Vec<u32>,
}

impl FootprintCounter {
    pub fn new(n_projected: usize) -> Self {
        Self {
            counts: vec![0; n_projected],
        }
    }

    /// Scatters counts to scene indices.
    pub fn to_scene<F>(&self, projected: &[ProjectedGaussian<F>], scene_len: usize) -> Vec<u32> {
        let mut out = vec![0; scene_len];
        for (pg, &c) in projected.iter().zip(&self.counts) {
            out[pg.source_index] += c;
        }
        out
    }
}

/// Packed per-Gaussian data the blender touches for every pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Splat<F> {
    pub mx: F,
    pub my: F,
    pub conic: [F; 3],
    pub opacity: F,
    pub color: [F; 3],
    /// Mahalanobis distance beyond which alpha is certainly below the cutoff.
    pub max_power: F,
}

/// Slack on [`Splat::max_power`] that absorbs rounding in the exponent and
/// product, so skipping never changes which Gaussians pass the cutoff.
const SKIP_MARGIN: f64 = 1e-2;

pub(crate) fn pack_splats<F: Real>(projected: &[ProjectedGaussian<F>]) -> Vec<Splat<F>> {
    projected
        .iter()
        .map(|p| Splat {
            mx: p.mu2d[0],
            my: p.mu2d[1],
            conic: p.cov2d_inv,
            opacity: p.opacity,
            color: p.color,
            max_power: F::of(2.0 * (p.opacity.f64() / ALPHA_CUTOFF).ln() + SKIP_MARGIN),
        })
        .collect()
}

/// Splits `data` into consecutive mutable chunks delimited by `offsets`.
pub(crate) fn split_by_offsets<'a, T>(mut data: &'a mut [T], offsets: &[usize]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(offsets.len().saturating_sub(1));
    for w in offsets.windows(2) {
        let (head, tail) = std::mem::take(&mut data).split_at_mut(w[1] - w[0]);
        out.push(head);
        data = tail;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sym2_inverse;

    fn pg(mu: [f64; 2], var: f64, depth: f64, idx: usize) -> ProjectedGaussian<f64> {
        let cov = [var, 0.0, var];
        ProjectedGaussian {
            mu2d: mu,
            cov2d: cov,
            cov2d_inv: sym2_inverse(cov).unwrap(),
            depth,
            color: [1.0; 3],
            opacity: 0.8,
            source_index: idx,
        }
    }

    #[test]
    fn empty_scene_has_no_pairs() {
        let grid = TileGrid::build::<f64>(&[], 32, 32, 16, Binning::Aabb).unwrap();
        assert_eq!(count_pairs(&grid), 0);
        assert_eq!(grid.offsets.len(), 5);
    }

    #[test]
    fn single_gaussian_single_tile() {
        let grid = TileGrid::build(&[pg([8.0, 8.0], 1.0, 1.0, 0)], 32, 32, 16, Binning::Aabb).unwrap();
        assert_eq!(count_pairs(&grid), 1);
        assert_eq!(grid.tile(0), &[0]);
    }

    #[test]
    fn lists_sorted_by_depth_then_index() {
        let ps = vec![
            pg([8.0, 8.0], 1.0, 3.0, 0),
            pg([8.0, 8.0], 1.0, 1.0, 1),
            pg([8.0, 8.0], 1.0, 2.0, 2),
            pg([8.0, 8.0], 1.0, 2.0, 3),
        ];
        let grid = TileGrid::build(&ps, 32, 32, 16, Binning::Aabb).unwrap();
        assert_eq!(grid.tile(0), &[1, 2, 3, 0]);
    }

    #[test]
    fn split_by_offsets_partitions() {
        let mut v = [1, 2, 3, 4, 5];
        let parts = split_by_offsets(&mut v, &[0, 2, 2, 5]);
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[0], &[1, 2]);
        assert!(parts[1].is_empty());
        assert_eq!(parts[2], &[3, 4, 5]);
    }
}
