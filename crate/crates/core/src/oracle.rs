//! Slow reference implementations for tests: untiled rendering, per-pixel
//! footprint counting, per-pixel tile coverage and finite differences.
//! Written independently of the tiled code paths, but with the same
//! floating point operation order so results can be compared bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Camera, ProjectedGaussian};
use crate::image::Image;
use crate::io::synth::{random_scene, ring_cameras, SynthSpec};
use crate::math::{sym2_inverse, Real};
use crate::raster::{GridGeometry, ALPHA_CUTOFF, ALPHA_MAX, T_MIN};
use crate::scene::Scene;

pub struct BruteForce<F> {
    pub image: Image<F>,
    pub transmittance: Vec<F>,
    /// Per projected Gaussian: masked pixels it contributed to.
    pub counts: Vec<u32>,
}

/// Renders every pixel against every Gaussian in depth order.
pub fn brute_force_render<F: Real>(ps: &[ProjectedGaussian<F>], width: usize, height: usize, mask: Option<&[bool]>) -> BruteForce<F> {
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| {
        ps[a].depth
            .partial_cmp(&ps[b].depth)
            .unwrap()
            .then(ps[a].source_index.cmp(&ps[b].source_index))
    });
    let mut image = Image::zeros(width, height);
    let mut transmittance = vec![F::one(); width * height];
    let mut counts = vec![0u32; ps.len()];
    for y in 0..height {
        for x in 0..width {
            let px = F::of(x as f64) + F::of(0.5);
            let py = F::of(y as f64) + F::of(0.5);
            let counting = mask.is_some_and(|m| m[y * width + x]);
            let mut t = F::one();
            let mut c = [F::zero(); 3];
            for &i in &order {
                let g = &ps[i];
                let dx = px - g.mu2d[0];
                let dy = py - g.mu2d[1];
                let [a, b, cc] = g.cov2d_inv;
                let power = a * dx * dx + F::of(2.0) * b * dx * dy + cc * dy * dy;
                let alpha = (g.opacity * (F::of(-0.5) * power).exp()).min(F::of(ALPHA_MAX));
                if alpha < F::of(ALPHA_CUTOFF) {
                    continue;
                }
                for ch in 0..3 {
                    c[ch] += t * alpha * g.color[ch];
                }
                t *= F::one() - alpha;
                if counting {
                    counts[i] += 1;
                }
                if t < F::of(T_MIN) {
                    break;
                }
            }
            image.set_pixel(x, y, c);
            transmittance[y * width + x] = t;
        }
    }
    BruteForce {
        image,
        transmittance,
        counts,
    }
}

/// Tiles containing at least one pixel center `(x + 0.5, y + 0.5)` for
/// which `inside` holds.
pub fn tiles_touched_by_pixels(geom: &GridGeometry, mut inside: impl FnMut(f64, f64) -> bool) -> Vec<u32> {
    let mut out = Vec::new();
    for ty in 0..geom.tiles_y {
        for tx in 0..geom.tiles_x {
            let x0 = tx * geom.tile_size;
            let y0 = ty * geom.tile_size;
            let hit = (y0..(y0 + geom.tile_size).min(geom.height))
                .any(|y| (x0..(x0 + geom.tile_size).min(geom.width)).any(|x| inside(x as f64 + 0.5, y as f64 + 0.5)));
            if hit {
                out.push((ty * geom.tiles_x + tx) as u32);
            }
        }
    }
    out
}

/// Random projected Gaussian with its mean near the `width` x `height`
/// image, a random anisotropic covariance and opacity in `opacity`.
pub fn random_projected<R: Rng + ?Sized>(
    rng: &mut R,
    index: usize,
    width: usize,
    height: usize,
    opacity: std::ops::Range<f64>,
) -> ProjectedGaussian<f64> {
    let mx = rng.random_range(-4.0..width as f64 + 4.0);
    let my = rng.random_range(-4.0..height as f64 + 4.0);
    let s1: f64 = rng.random_range(0.5f64..5.0);
    let s2: f64 = rng.random_range(0.5f64..5.0);
    let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (c, s) = (th.cos(), th.sin());
    let cov = [
        c * c * s1 * s1 + s * s * s2 * s2 + 0.3,
        c * s * (s1 * s1 - s2 * s2),
        s * s * s1 * s1 + c * c * s2 * s2 + 0.3,
    ];
    ProjectedGaussian {
        mu2d: [mx, my],
        cov2d: cov,
        cov2d_inv: sym2_inverse(cov).unwrap(),
        depth: rng.random_range(0.5..10.0),
        color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        opacity: rng.random_range(opacity),
        source_index: index,
    }
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with an absolute floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Small seeded scene in the unit cube plus one camera looking at it from a
/// ring position chosen by `seed`. Scales are large enough that every
/// Gaussian covers several pixels at `size` x `size`.
pub fn small_scene(seed: u64, n: usize, size: usize, sh_degree: usize, opacity: [f64; 2]) -> (Scene, Camera) {
    let spec = SynthSpec {
        n_gaussians: n,
        n_views: 8,
        width: size,
        height: size,
        seed,
        sh_degree,
        opacity_range: opacity,
        scale_range: [0.06, 0.2],
        ..SynthSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = random_scene(&spec, &mut rng).expect("valid synthetic spec");
    let cams = ring_cameras(&spec);
    let cam = cams[(seed % cams.len() as u64) as usize].clone();
    (scene, cam)
}
