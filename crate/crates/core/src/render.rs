//! Whole-view render and backward: projection, binning, blending, and the
//! chain back to the 3D parameters.

use rayon::prelude::*;

use crate::camera::{conic_grad_to_cov_grad, project_all, project_backward, Camera, ProjectedGaussian, ProjectedGrad, ViewParams};
use crate::error::Result;
use crate::image::Image;
use crate::math::Real;
use crate::raster::{blend_backward, blend_forward, Binning, FootprintCounter, RenderOutputs, TileGrid};
use crate::scene::{Gaussian3D, Scene};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub tile_size: usize,
    pub binning: Binning,
    /// SH degree used for color; may be lower than the scene's.
    pub sh_degree: usize,
}

impl RenderSettings {
    pub fn new(tile_size: usize, binning: Binning, sh_degree: usize) -> Self {
        Self {
            tile_size,
            binning,
            sh_degree,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Frame<F> {
    pub projected: Vec<ProjectedGaussian<F>>,
    pub grid: TileGrid,
    pub out: RenderOutputs<F>,
}

impl<F: Real> Frame<F> {
    pub fn image(&self) -> &Image<F> {
        &self.out.image
    }
}

pub fn render<F: Real>(scene: &Scene, cam: &Camera, s: &RenderSettings) -> Result<Frame<F>> {
    let projected = project_all::<F>(&scene.gaussians, cam, s.sh_degree);
    let grid = TileGrid::build(&projected, cam.width, cam.height, s.tile_size, s.binning)?;
    let out = blend_forward(&grid, &projected, None, None);
    Ok(Frame { projected, grid, out })
}

/// Renders and counts, per scene Gaussian, the masked pixels it contributed to.
pub fn render_counted<F: Real>(scene: &Scene, cam: &Camera, s: &RenderSettings, mask: &[bool]) -> Result<(Frame<F>, Vec<u32>)> {
    let projected = project_all::<F>(&scene.gaussians, cam, s.sh_degree);
    let grid = TileGrid::build(&projected, cam.width, cam.height, s.tile_size, s.binning)?;
    let mut counter = FootprintCounter::new(projected.len());
    let out = blend_forward(&grid, &projected, Some(mask), Some(&mut counter));
    let counts = counter.to_scene(&projected, scene.len());
    Ok((Frame { projected, grid, out }, counts))
}

/// Per-view gradients, indexed by scene Gaussian.
#[derive(Clone, Debug)]
pub struct ViewGrads {
    pub params: Vec<Gaussian3D>,
    /// Screen-space mean gradient in pixels.
    pub d_mu2d: Vec<[f64; 2]>,
    /// Per-axis sum of absolute per-pixel mean gradients, in pixels.
    pub abs_mu2d: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
    /// 3-sigma screen radius, zero when culled.
    pub radius: Vec<f64>,
}

pub fn backward<F: Real>(scene: &Scene, cam: &Camera, s: &RenderSettings, frame: &Frame<F>, d_image: &Image<F>) -> ViewGrads {
    let n = scene.len();
    let splat_grads = blend_backward(&frame.grid, &frame.projected, &frame.out, d_image);
    let view = ViewParams::<F>::new(cam);
    let per_projected: Vec<Gaussian3D> = frame
        .projected
        .par_iter()
        .zip(splat_grads.par_iter())
        .map(|(pg, sg)| {
            let up = ProjectedGrad {
                d_mu2d: sg.d_mu2d,
                d_cov2d: conic_grad_to_cov_grad(pg.cov2d_inv, sg.d_cov2d_inv),
                d_color: sg.d_color,
                d_opacity: sg.d_opacity,
            };
            project_backward(&scene.gaussians[pg.source_index], &view, s.sh_degree, &up)
        })
        .collect();

    let mut out = ViewGrads {
        params: vec![Gaussian3D::zeros(scene.sh_degree); n],
        d_mu2d: vec![[0.0; 2]; n],
        abs_mu2d: vec![[0.0; 2]; n],
        visible: vec![false; n],
        radius: vec![0.0; n],
    };
    for ((pg, sg), g) in frame.projected.iter().zip(&splat_grads).zip(per_projected) {
        let i = pg.source_index;
        out.params[i] = g;
        out.d_mu2d[i] = sg.d_mu2d.map(Real::f64);
        out.abs_mu2d[i] = sg.abs_mu2d.map(Real::f64);
        out.visible[i] = true;
        out.radius[i] = pg.radius().f64();
    }
    out
}
