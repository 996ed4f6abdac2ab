//! Seeded synthetic scenes: random Gaussians in the unit cube seen by a ring
//! of cameras, rendered with this crate's own renderer and quantized to 8 bits.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::dataset::{save_dataset, Dataset};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::logit;
use crate::raster::{Binning, DEFAULT_TILE_SIZE};
use crate::render::{render, RenderSettings};
use crate::scene::{Gaussian3D, Scene};
use crate::sh::{num_sh_coeffs, SH_C0};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_gaussians: usize,
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub sh_degree: usize,
    /// Standard deviation of the noise added to the initial points, as a
    /// fraction of the cube side.
    pub init_noise: f64,
    pub ring_radius: f64,
    pub fov_x: f64,
    pub opacity_range: [f64; 2],
    pub scale_range: [f64; 2],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_gaussians: 500,
            n_views: 64,
            width: 128,
            height: 128,
            seed: 0,
            sh_degree: 1,
            init_noise: 0.05,
            ring_radius: 2.6,
            fov_x: 50f64.to_radians(),
            opacity_range: [0.2, 0.9],
            scale_range: [0.015, 0.06],
        }
    }
}

/// Cameras evenly spaced in azimuth around the origin, with the elevation
/// oscillating so the ring is not planar.
pub fn ring_cameras(spec: &SynthSpec) -> Vec<Camera> {
    (0..spec.n_views)
        .map(|i| {
            let t = i as f64 / spec.n_views as f64 * std::f64::consts::TAU;
            let elev = 0.1 + 0.35 * (3.0 * t).sin();
            let r = spec.ring_radius;
            let eye = [r * elev.cos() * t.cos(), r * elev.sin(), r * elev.cos() * t.sin()];
            Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], spec.width, spec.height, spec.fov_x)
        })
        .collect()
}

pub fn random_scene(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Scene> {
    let k = num_sh_coeffs(spec.sh_degree);
    let [lo_s, hi_s] = spec.scale_range.map(f64::ln);
    let [lo_o, hi_o] = spec.opacity_range;
    let gaussians = (0..spec.n_gaussians)
        .map(|_| {
            let mut g = Gaussian3D::zeros(spec.sh_degree);
            g.mu = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut *rng));
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.rot = q.map(|v| v / n);
            g.log_scale = std::array::from_fn(|_| rng.random_range(lo_s..hi_s));
            g.opacity_logit = logit(rng.random_range(lo_o..hi_o));
            for c in 0..3 {
                let color: f64 = rng.random_range(0.1..0.9);
                g.sh[c] = (color - 0.5) / SH_C0;
            }
            for j in 1..k {
                for c in 0..3 {
                    g.sh[3 * j + c] = rng.random_range(-0.15..0.15);
                }
            }
            g
        })
        .collect();
    Scene::new(gaussians, spec.sh_degree)
}

/// Builds the dataset and ground-truth scene; with `out_dir` also writes the
/// dataset files plus `gt.ply` there.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: Option<&Path>) -> Result<(Dataset, Scene)> {
    if spec.n_views < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 views, got {}", spec.n_views)));
    }
    if spec.n_gaussians == 0 {
        return Err(Error::Empty("synthetic scene"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene = random_scene(spec, &mut rng)?;
    let cameras = ring_cameras(spec);
    let settings = RenderSettings::new(DEFAULT_TILE_SIZE, Binning::Aabb, spec.sh_degree);
    let images = cameras
        .iter()
        .map(|cam| {
            let frame = render::<f64>(&scene, cam, &settings)?;
            let img = frame.image();
            Image::from_rgb8(img.width, img.height, &img.to_rgb8())
        })
        .collect::<Result<Vec<Image<f32>>>>()?;
    let noise = Normal::new(0.0, spec.init_noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let points = scene
        .gaussians
        .iter()
        .map(|g| {
            let p = std::array::from_fn(|a| g.mu[a] + noise.sample(&mut rng));
            (p, g.base_color().map(|c| c.clamp(0.0, 1.0)))
        })
        .collect();
    let names = (0..cameras.len()).map(|i| format!("{i}.png")).collect();
    let ds = Dataset::new(cameras, images, names, points)?;
    if let Some(dir) = out_dir {
        save_dataset(&ds, dir)?;
        save_checkpoint(&scene, &dir.join("gt.ply"))?;
    }
    Ok((ds, scene))
}
