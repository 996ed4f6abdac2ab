use rayon::prelude::*;

use super::{pack_splats, split_by_offsets, FootprintCounter, Splat, TileGrid, ALPHA_CUTOFF, ALPHA_MAX, T_MIN};
use crate::camera::ProjectedGaussian;
use crate::image::Image;
use crate::math::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutputs<F> {
    pub image: Image<F>,
    /// Final transmittance per pixel.
    pub transmittance: Vec<F>,
    /// Number of Gaussians blended into each pixel.
    pub contrib_count: Vec<u32>,
    /// One past the tile-list position of the last Gaussian blended into each
    /// pixel; the backward pass walks the list from here.
    pub last_contributor: Vec<u32>,
}

/// Alpha of `s` at pixel center `(px, py)` before the cap, and the Gaussian
/// falloff itself. `None` when the pixel is far enough out that alpha is
/// below the cutoff anyway.
#[inline(always)]
pub(crate) fn raw_alpha<F: Real>(s: &Splat<F>, px: F, py: F) -> Option<(F, F, F, F)> {
    let dx = px - s.mx;
    let dy = py - s.my;
    let [a, b, c] = s.conic;
    let m = a * dx * dx + F::of(2.0) * b * dx * dy + c * dy * dy;
    if m > s.max_power {
        return None;
    }
    let g = (F::of(-0.5) * m).exp();
    Some((s.opacity * g, g, dx, dy))
}

struct TileOut<F> {
    color: Vec<[F; 3]>,
    t: Vec<F>,
    count: Vec<u32>,
    last: Vec<u32>,
}

/// Front-to-back alpha blending over the tile lists in `grid`.
///
/// With `mask` and `counter` given, every Gaussian whose alpha passes the
/// cutoff at a masked pixel (before blending terminates) gets its count
/// incremented.
pub fn blend_forward<F: Real>(
    grid: &TileGrid,
    projected: &[ProjectedGaussian<F>],
    mask: Option<&[bool]>,
    counter: Option<&mut FootprintCounter>,
) -> RenderOutputs<F> {
    let geom = grid.geom;
    let splats = pack_splats(projected);
    let n_tiles = geom.num_tiles();
    let counting = mask.is_some() && counter.is_some();
    let mut pair_hits = vec![0u32; if counting { grid.num_pairs() } else { 0 }];

    let tile_outs: Vec<TileOut<F>> = if counting {
        let slices = split_by_offsets(&mut pair_hits, &grid.offsets);
        slices
            .into_par_iter()
            .enumerate()
            .map(|(t, hits)| render_tile(grid, &splats, t, mask, Some(hits)))
            .collect()
    } else {
        (0..n_tiles)
            .into_par_iter()
            .map(|t| render_tile(grid, &splats, t, None, None))
            .collect()
    };

    if let (Some(counter), true) = (counter, counting) {
        counter.counts.clear();
        counter.counts.resize(projected.len(), 0);
        for (&id, &h) in grid.ids.iter().zip(&pair_hits) {
            counter.counts[id as usize] += h;
        }
    }

    let (w, h) = (geom.width, geom.height);
    let mut image = Image::zeros(w, h);
    let mut transmittance = vec![F::one(); w * h];
    let mut contrib_count = vec![0; w * h];
    let mut last_contributor = vec![0; w * h];
    for (t, out) in tile_outs.into_iter().enumerate() {
        let (x0, x1, y0, y1) = grid.tile_bounds(t);
        let tw = x1 - x0;
        for y in y0..y1 {
            for x in x0..x1 {
                let local = (y - y0) * tw + (x - x0);
                let p = y * w + x;
                image.data[3 * p..3 * p + 3].copy_from_slice(&out.color[local]);
                transmittance[p] = out.t[local];
                contrib_count[p] = out.count[local];
                last_contributor[p] = out.last[local];
            }
        }
    }
    RenderOutputs {
        image,
        transmittance,
        contrib_count,
        last_contributor,
    }
}

fn render_tile<F: Real>(
    grid: &TileGrid,
    splats: &[Splat<F>],
    t: usize,
    mask: Option<&[bool]>,
    mut hits: Option<&mut [u32]>,
) -> TileOut<F> {
    let (x0, x1, y0, y1) = grid.tile_bounds(t);
    let n = (x1 - x0) * (y1 - y0);
    let mut out = TileOut {
        color: vec![[F::zero(); 3]; n],
        t: vec![F::one(); n],
        count: vec![0; n],
        last: vec![0; n],
    };
    let list = grid.tile(t);
    if list.is_empty() {
        return out;
    }
    let cutoff = F::of(ALPHA_CUTOFF);
    let cap = F::of(ALPHA_MAX);
    let t_min = F::of(T_MIN);
    let half = F::of(0.5);
    let width = grid.geom.width;
    let mut local = 0;
    for y in y0..y1 {
        let py = F::of(y as f64) + half;
        for x in x0..x1 {
            let px = F::of(x as f64) + half;
            let masked = mask.is_some_and(|m| m[y * width + x]);
            let mut tr = F::one();
            let mut c = [F::zero(); 3];
            let mut count = 0u32;
            let mut last = 0u32;
            for (k, &id) in list.iter().enumerate() {
                let s = &splats[id as usize];
                let Some((raw, _, _, _)) = raw_alpha(s, px, py) else {
                    continue;
                };
                let alpha = raw.min(cap);
                if alpha < cutoff {
                    continue;
                }
                let w = tr * alpha;
                c[0] += w * s.color[0];
                c[1] += w * s.color[1];
                c[2] += w * s.color[2];
                tr *= F::one() - alpha;
                count += 1;
                last = k as u32 + 1;
                if masked {
                    if let Some(h) = hits.as_deref_mut() {
                        h[k] += 1;
                    }
                }
                if tr < t_min {
                    break;
                }
            }
            out.color[local] = c;
            out.t[local] = tr;
            out.count[local] = count;
            out.last[local] = last;
            local += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sym2_inverse;
    use crate::raster::Binning;

    fn pg(mu: [f64; 2], var: f64, opacity: f64, color: [f64; 3], depth: f64, idx: usize) -> ProjectedGaussian<f64> {
        let cov = [var, 0.0, var];
        ProjectedGaussian {
            mu2d: mu,
            cov2d: cov,
            cov2d_inv: sym2_inverse(cov).unwrap(),
            depth,
            color,
            opacity,
            source_index: idx,
        }
    }

    fn render(ps: &[ProjectedGaussian<f64>], w: usize, h: usize) -> RenderOutputs<f64> {
        let grid = TileGrid::build(ps, w, h, 16, Binning::Aabb).unwrap();
        blend_forward(&grid, ps, None, None)
    }

    #[test]
    fn opaque_gaussian_at_pixel_center() {
        let c = [0.2, 0.6, 1.0];
        let out = render(&[pg([4.5, 4.5], 2.0, 1.0, c, 1.0, 0)], 8, 8);
        let px = out.image.pixel(4, 4);
        for ch in 0..3 {
            assert!((px[ch] - 0.99 * c[ch]).abs() < 1e-15);
        }
        assert!((out.transmittance[4 * 8 + 4] - 0.01).abs() < 1e-15);
        assert_eq!(out.contrib_count[4 * 8 + 4], 1);
    }

    #[test]
    fn two_half_alpha_gaussians() {
        let c1 = [1.0, 0.0, 0.0];
        let c2 = [0.0, 1.0, 0.0];
        let ps = [
            pg([4.5, 4.5], 2.0, 0.5, c1, 1.0, 0),
            pg([4.5, 4.5], 2.0, 0.5, c2, 2.0, 1),
        ];
        let out = render(&ps, 8, 8);
        let px = out.image.pixel(4, 4);
        assert!((px[0] - 0.5).abs() < 1e-15);
        assert!((px[1] - 0.25).abs() < 1e-15);
        assert_eq!(px[2], 0.0);
        assert!((out.transmittance[4 * 8 + 4] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_scene_renders_black() {
        let out = render(&[], 20, 12);
        assert!(out.image.data.iter().all(|&v| v == 0.0));
        assert!(out.transmittance.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn counter_counts_masked_contributions() {
        let ps = [pg([8.0, 8.0], 1.0, 0.9, [1.0; 3], 1.0, 0)];
        let grid = TileGrid::build(&ps, 16, 16, 16, Binning::Aabb).unwrap();
        let mut mask = vec![false; 256];
        mask[7 * 16 + 7] = true;
        mask[0] = true;
        let mut counter = FootprintCounter::new(1);
        blend_forward(&grid, &ps, Some(&mask), Some(&mut counter));
        assert_eq!(counter.counts, vec![1]);
    }
}
