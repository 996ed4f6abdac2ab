//! Gaussian-to-tile assignment.
//!
//! Tile coverage is decided against the rectangle spanned by the tile's pixel
//! centers, which is where the blender actually samples.

use serde::{Deserialize, Serialize};

use crate::camera::ProjectedGaussian;
use crate::error::{Error, Result};
use crate::math::{sym2_inverse, Real};

/// Squared Mahalanobis radius of the 3-sigma ellipse.
pub const THREE_SIGMA_SQ: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binning {
    /// Axis-aligned bounding box of the 3-sigma ellipse.
    Aabb,
    /// Exact tile/ellipse intersection with the opacity-aware Mahalanobis
    /// threshold `beta * 2 ln(opacity / tau_alpha)`, never wider than 3 sigma.
    Compact { beta: f64, tau_alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, tile_size: usize) -> Self {
        assert!(tile_size > 0);
        Self {
            width,
            height,
            tile_size,
            tiles_x: width.div_ceil(tile_size),
            tiles_y: height.div_ceil(tile_size),
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Pixel-center extent of a tile column: `[first + 0.5, last + 0.5]`.
    #[inline]
    fn column_span(&self, tx: usize) -> (f64, f64) {
        let x0 = tx * self.tile_size;
        let x1 = ((tx + 1) * self.tile_size).min(self.width);
        (x0 as f64 + 0.5, x1 as f64 - 0.5)
    }

    #[inline]
    fn row_span(&self, ty: usize) -> (f64, f64) {
        let y0 = ty * self.tile_size;
        let y1 = ((ty + 1) * self.tile_size).min(self.height);
        (y0 as f64 + 0.5, y1 as f64 - 0.5)
    }

    /// Tile columns whose pixel-center span meets `[lo, hi]`.
    fn columns(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        let s = self.tile_size as f64;
        let first = (((lo + 0.5) / s - 1.0).ceil().max(0.0) as usize).min(self.tiles_x);
        let last = ((hi - 0.5) / s).floor();
        let end = if last < 0.0 {
            0
        } else {
            (last as usize + 1).min(self.tiles_x)
        };
        (first..end).filter(move |&tx| {
            let (a, b) = self.column_span(tx);
            a <= hi && b >= lo
        })
    }

    fn rows(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        let s = self.tile_size as f64;
        let first = (((lo + 0.5) / s - 1.0).ceil().max(0.0) as usize).min(self.tiles_y);
        let last = ((hi - 0.5) / s).floor();
        let end = if last < 0.0 {
            0
        } else {
            (last as usize + 1).min(self.tiles_y)
        };
        (first..end).filter(move |&ty| {
            let (a, b) = self.row_span(ty);
            a <= hi && b >= lo
        })
    }
}

/// Mahalanobis threshold `beta * 2 ln(opacity / tau_alpha)` beyond which a
/// Gaussian's alpha drops below `tau_alpha` (for `beta = 1`).
pub fn compact_threshold(opacity: f64, tau_alpha: f64, beta: f64) -> f64 {
    beta * 2.0 * (opacity / tau_alpha).ln()
}

/// Calls `emit` with every tile id overlapping the 3-sigma box of `pg`.
pub fn for_each_aabb_tile<F: Real>(pg: &ProjectedGaussian<F>, geom: &GridGeometry, mut emit: impl FnMut(u32)) {
    let (mx, my) = (pg.mu2d[0].f64(), pg.mu2d[1].f64());
    let rx = 3.0 * pg.cov2d[0].f64().sqrt();
    let ry = 3.0 * pg.cov2d[2].f64().sqrt();
    if !(rx.is_finite() && ry.is_finite()) {
        return;
    }
    for ty in geom.rows(my - ry, my + ry) {
        for tx in geom.columns(mx - rx, mx + rx) {
            emit((ty * geom.tiles_x + tx) as u32);
        }
    }
}

pub fn bin_aabb<F: Real>(pg: &ProjectedGaussian<F>, geom: &GridGeometry) -> Vec<u32> {
    let mut out = Vec::new();
    for_each_aabb_tile(pg, geom, |t| out.push(t));
    out
}

/// Minimum of `dᵀ M d` over the rectangle `[x0, x1] × [y0, y1]` (offsets from
/// the ellipse center), `M = [[a, b], [b, c]]` positive definite.
pub fn min_quadratic_over_rect(conic: [f64; 3], x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    if x0 <= 0.0 && 0.0 <= x1 && y0 <= 0.0 && 0.0 <= y1 {
        return 0.0;
    }
    let [a, b, c] = conic;
    let q = |x: f64, y: f64| a * x * x + 2.0 * b * x * y + c * y * y;
    let mut best = f64::INFINITY;
    for x in [x0, x1] {
        let y = (-b * x / c).clamp(y0, y1);
        best = best.min(q(x, y));
    }
    for y in [y0, y1] {
        let x = (-b * y / a).clamp(x0, x1);
        best = best.min(q(x, y));
    }
    best
}

/// Calls `emit` with every tile whose pixel-center rectangle meets the compact
/// ellipse of `pg`. Always a subset of the 3-sigma box tiles.
pub fn for_each_compact_tile<F: Real>(
    pg: &ProjectedGaussian<F>,
    geom: &GridGeometry,
    beta: f64,
    tau_alpha: f64,
    mut emit: impl FnMut(u32),
) -> Result<()> {
    let cov = pg.cov2d.map(Real::f64);
    let conic = sym2_inverse(cov).ok_or_else(|| {
        Error::Internal(format!(
            "projected covariance {cov:?} of gaussian {} is not positive definite",
            pg.source_index
        ))
    })?;
    let opacity = pg.opacity.f64();
    if opacity <= tau_alpha {
        return Ok(());
    }
    let thr = compact_threshold(opacity, tau_alpha, beta).min(THREE_SIGMA_SQ);
    if !(thr > 0.0) {
        return Ok(());
    }
    let (mx, my) = (pg.mu2d[0].f64(), pg.mu2d[1].f64());
    let mut result = Ok(());
    for_each_aabb_tile(pg, geom, |t| {
        if result.is_err() {
            return;
        }
        let tx = t as usize % geom.tiles_x;
        let ty = t as usize / geom.tiles_x;
        let (x0, x1) = geom.column_span(tx);
        let (y0, y1) = geom.row_span(ty);
        let m = min_quadratic_over_rect(conic, x0 - mx, x1 - mx, y0 - my, y1 - my);
        if m.is_nan() {
            result = Err(Error::Internal("non-finite ellipse test".into()));
        } else if m <= thr {
            emit(t);
        }
    });
    result
}

pub fn bin_compact<F: Real>(
    pg: &ProjectedGaussian<F>,
    geom: &GridGeometry,
    beta: f64,
    tau_alpha: f64,
) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for_each_compact_tile(pg, geom, beta, tau_alpha, |t| out.push(t))?;
    Ok(out)
}

pub fn bin<F: Real>(
    pg: &ProjectedGaussian<F>,
    geom: &GridGeometry,
    binning: Binning,
    emit: impl FnMut(u32),
) -> Result<()> {
    match binning {
        Binning::Aabb => {
            for_each_aabb_tile(pg, geom, emit);
            Ok(())
        }
        Binning::Compact { beta, tau_alpha } => for_each_compact_tile(pg, geom, beta, tau_alpha, emit),
    }
}
