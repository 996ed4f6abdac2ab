//! Pinhole cameras and the first-order (EWA) projection of 3D Gaussians.
//!
//! Pixel `(u, v)` samples the continuous image plane at `(u + 0.5, v + 0.5)`;
//! the principal point is given in the same continuous coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    cast3, mat3_mul, mat3_tvec, mat3_vec, sigmoid, sub3, sym2_eigenvalues, sym2_inverse, Mat3, Real, Vec3,
};
use crate::scene::{covariance_unchecked, quat_to_rotation, Gaussian3D};
use crate::sh::{evaluate_sh, evaluate_sh_backward};

/// Low-pass floor added to the diagonal of every projected covariance.
pub const COV2D_FLOOR: f64 = 0.3;
/// Means further outside the image than this multiple of the 3-sigma radius are culled.
pub const GUARD_BAND: f64 = 1.3;
pub const DEFAULT_NEAR: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Rigid world-to-camera transform, row-major. Camera looks down +z,
    /// x to the right, y down.
    pub world_to_cam: [[f64; 4]; 4],
    pub near: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("camera has zero size".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let r = self.rotation();
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                if (d - e).abs() > 1e-6 {
                    return Err(Error::InvalidParameter(
                        "world_to_cam rotation is not orthonormal".into(),
                    ));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(
                "world_to_cam rotation has negative determinant".into(),
            ));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3<f64> {
        let m = &self.world_to_cam;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    pub fn translation(&self) -> [f64; 3] {
        let m = &self.world_to_cam;
        [m[0][3], m[1][3], m[2][3]]
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> [f64; 3] {
        let c = mat3_tvec(&self.rotation(), self.translation());
        c.map(|v| -v)
    }

    /// Camera at `eye` looking at `target`, with `up` giving the world up axis.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        width: usize,
        height: usize,
        fov_x: f64,
    ) -> Self {
        use crate::math::{cross3, normalize3};
        let f = normalize3(sub3(target, eye));
        let r = normalize3(cross3(f, up));
        let d = cross3(f, r);
        let rot = [r, d, f];
        let t = mat3_vec(&rot, eye).map(|v| -v);
        let fx = width as f64 / (2.0 * (fov_x / 2.0).tan());
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&rot[i]);
            m[i][3] = t[i];
        }
        m[3][3] = 1.0;
        Self {
            width,
            height,
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            world_to_cam: m,
            near: DEFAULT_NEAR,
        }
    }

    /// Same camera rendering at `width` x `height`, intrinsics scaled to match.
    pub fn scaled(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            width,
            height,
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedGaussian<F> {
    pub mu2d: [F; 2],
    /// Symmetric 2x2 covariance packed as `(xx, xy, yy)`, floor included.
    pub cov2d: [F; 3],
    /// Inverse of `cov2d`, same packing.
    pub cov2d_inv: [F; 3],
    pub depth: F,
    pub color: [F; 3],
    pub opacity: F,
    pub source_index: usize,
}

impl<F: Real> ProjectedGaussian<F> {
    /// 3-sigma radius along the major axis, in pixels.
    pub fn radius(&self) -> F {
        F::of(3.0) * sym2_eigenvalues(self.cov2d).0.sqrt()
    }
}

/// Camera quantities shared by every Gaussian in a view.
#[derive(Clone, Copy, Debug)]
pub struct ViewParams<F> {
    pub rot: Mat3<F>,
    pub trans: Vec3<F>,
    pub center: Vec3<F>,
    pub fx: F,
    pub fy: F,
    pub cx: F,
    pub cy: F,
    pub near: F,
    pub width: F,
    pub height: F,
}

impl<F: Real> ViewParams<F> {
    pub fn new(cam: &Camera) -> Self {
        let r = cam.rotation();
        Self {
            rot: r.map(cast3),
            trans: cast3(cam.translation()),
            center: cast3(cam.center()),
            fx: F::of(cam.fx),
            fy: F::of(cam.fy),
            cx: F::of(cam.cx),
            cy: F::of(cam.cy),
            near: F::of(cam.near),
            width: F::of(cam.width as f64),
            height: F::of(cam.height as f64),
        }
    }
}

/// Projects one Gaussian; `None` when it is culled.
pub fn project<F: Real>(
    g: &Gaussian3D,
    index: usize,
    view: &ViewParams<F>,
    sh_degree: usize,
) -> Option<ProjectedGaussian<F>> {
    let mu: Vec3<F> = cast3(g.mu);
    let t = add3(mat3_vec(&view.rot, mu), view.trans);
    if !(t[2] > view.near) {
        return None;
    }
    let inv_z = F::one() / t[2];
    let mu2d = [
        view.fx * t[0] * inv_z + view.cx,
        view.fy * t[1] * inv_z + view.cy,
    ];

    let rot: [F; 4] = g.rot.map(F::of);
    let scale: Vec3<F> = cast3(g.scale());
    let sigma = covariance_unchecked(&quat_to_rotation(rot), scale);
    let tm = jacobian_times_rotation(view, t);
    let cov2d = project_cov(&tm, &sigma);
    let cov2d_inv = sym2_inverse(cov2d)?;

    let radius = F::of(3.0) * sym2_eigenvalues(cov2d).0.sqrt();
    let band = F::of(GUARD_BAND) * radius;
    if !(mu2d[0] >= -band
        && mu2d[0] <= view.width + band
        && mu2d[1] >= -band
        && mu2d[1] <= view.height + band)
    {
        return None;
    }

    let sh: Vec<F> = g.sh.iter().map(|&v| F::of(v)).collect();
    let dir = sub3(mu, view.center);
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let color = evaluate_sh(&sh, dir.map(|v| v / len), sh_degree);

    Some(ProjectedGaussian {
        mu2d,
        cov2d,
        cov2d_inv,
        depth: t[2],
        color,
        opacity: F::of(sigmoid(g.opacity_logit)),
        source_index: index,
    })
}

/// Projects every Gaussian of a scene, keeping the survivors in scene order.
pub fn project_all<F: Real>(
    gaussians: &[Gaussian3D],
    cam: &Camera,
    sh_degree: usize,
) -> Vec<ProjectedGaussian<F>> {
    use rayon::prelude::*;
    let view = ViewParams::new(cam);
    gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| project(g, i, &view, sh_degree))
        .collect()
}

#[inline]
fn add3<F: Real>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `J W` as two rows, with `J` the perspective Jacobian at camera point `t`.
#[inline]
fn jacobian_times_rotation<F: Real>(view: &ViewParams<F>, t: Vec3<F>) -> [Vec3<F>; 2] {
    let inv_z = F::one() / t[2];
    let j = jacobian(view, t, inv_z);
    let w = &view.rot;
    let row = |jr: Vec3<F>| [0, 1, 2].map(|c| jr[0] * w[0][c] + jr[1] * w[1][c] + jr[2] * w[2][c]);
    [row(j[0]), row(j[1])]
}

#[inline]
fn jacobian<F: Real>(view: &ViewParams<F>, t: Vec3<F>, inv_z: F) -> [Vec3<F>; 2] {
    let inv_z2 = inv_z * inv_z;
    [
        [view.fx * inv_z, F::zero(), -view.fx * t[0] * inv_z2],
        [F::zero(), view.fy * inv_z, -view.fy * t[1] * inv_z2],
    ]
}

/// `T Σ Tᵀ + floor·I`, packed.
#[inline]
fn project_cov<F: Real>(tm: &[Vec3<F>; 2], sigma: &Mat3<F>) -> [F; 3] {
    let ts0 = mat3_tvec(sigma, tm[0]);
    let ts1 = mat3_tvec(sigma, tm[1]);
    let dot = |a: Vec3<F>, b: Vec3<F>| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let floor = F::of(COV2D_FLOOR);
    [dot(ts0, tm[0]) + floor, dot(ts0, tm[1]), dot(ts1, tm[1]) + floor]
}

/// Upstream gradients with respect to one projected Gaussian.
///
/// Symmetric 2x2 quantities are packed `(xx, xy, yy)` and the off-diagonal
/// gradient is the derivative with respect to the shared off-diagonal value
/// (both matrix entries move together).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProjectedGrad<F> {
    pub d_mu2d: [F; 2],
    pub d_cov2d: [F; 3],
    pub d_color: [F; 3],
    pub d_opacity: F,
}

/// Converts a gradient with respect to `cov2d_inv` into one with respect to `cov2d`.
pub fn conic_grad_to_cov_grad<F: Real>(conic: [F; 3], d_conic: [F; 3]) -> [F; 3] {
    let half = F::of(0.5);
    let m = [[conic[0], conic[1]], [conic[1], conic[2]]];
    let g = [[d_conic[0], half * d_conic[1]], [half * d_conic[1], d_conic[2]]];
    // H = -M G M
    let mut mg = [[F::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            mg[i][j] = m[i][0] * g[0][j] + m[i][1] * g[1][j];
        }
    }
    let mut h = [[F::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            h[i][j] = -(mg[i][0] * m[0][j] + mg[i][1] * m[1][j]);
        }
    }
    [h[0][0], h[0][1] + h[1][0], h[1][1]]
}

/// Exact gradients of [`project`] composed with the parameter activations.
/// The result has the same shape as the input Gaussian.
pub fn project_backward<F: Real>(
    g: &Gaussian3D,
    view: &ViewParams<F>,
    sh_degree: usize,
    up: &ProjectedGrad<F>,
) -> Gaussian3D {
    let two = F::of(2.0);
    let mu: Vec3<F> = cast3(g.mu);
    let t = add3(mat3_vec(&view.rot, mu), view.trans);
    let inv_z = F::one() / t[2];
    let inv_z2 = inv_z * inv_z;
    let inv_z3 = inv_z2 * inv_z;

    let q: [F; 4] = g.rot.map(F::of);
    let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let qu = q.map(|v| v / qn);
    let r = quat_to_rotation(qu);
    let scale: Vec3<F> = cast3(g.scale());
    let sigma = covariance_unchecked(&r, scale);
    let tm = jacobian_times_rotation(view, t);

    // Full symmetric gradient w.r.t. cov2d.
    let half = F::of(0.5);
    let h = [
        [up.d_cov2d[0], half * up.d_cov2d[1]],
        [half * up.d_cov2d[1], up.d_cov2d[2]],
    ];

    // dL/dΣ3 = Tᵀ H T
    let mut d_sigma = [[F::zero(); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut s = F::zero();
            for i in 0..2 {
                for j in 0..2 {
                    s += tm[i][a] * h[i][j] * tm[j][b];
                }
            }
            d_sigma[a][b] = s;
        }
    }

    // dL/dT = 2 H T Σ
    let mut ht = [[F::zero(); 3]; 2];
    for i in 0..2 {
        for c in 0..3 {
            ht[i][c] = h[i][0] * tm[0][c] + h[i][1] * tm[1][c];
        }
    }
    let mut d_t = [[F::zero(); 3]; 2];
    for i in 0..2 {
        for c in 0..3 {
            d_t[i][c] = two * (ht[i][0] * sigma[0][c] + ht[i][1] * sigma[1][c] + ht[i][2] * sigma[2][c]);
        }
    }
    // dL/dJ = dL/dT Wᵀ
    let w = &view.rot;
    let d_j: [Vec3<F>; 2] = [0, 1].map(|i| [0, 1, 2].map(|c| d_t[i][0] * w[c][0] + d_t[i][1] * w[c][1] + d_t[i][2] * w[c][2]));

    let (fx, fy) = (view.fx, view.fy);
    let mut d_tc = [F::zero(); 3];
    d_tc[0] += d_j[0][2] * (-fx * inv_z2);
    d_tc[1] += d_j[1][2] * (-fy * inv_z2);
    d_tc[2] += d_j[0][0] * (-fx * inv_z2)
        + d_j[0][2] * (two * fx * t[0] * inv_z3)
        + d_j[1][1] * (-fy * inv_z2)
        + d_j[1][2] * (two * fy * t[1] * inv_z3);
    d_tc[0] += up.d_mu2d[0] * fx * inv_z;
    d_tc[1] += up.d_mu2d[1] * fy * inv_z;
    d_tc[2] -= up.d_mu2d[0] * fx * t[0] * inv_z2 + up.d_mu2d[1] * fy * t[1] * inv_z2;

    let mut d_mu = mat3_tvec(&view.rot, d_tc);

    // View-dependent color.
    let sh: Vec<F> = g.sh.iter().map(|&v| F::of(v)).collect();
    let mut d_sh = vec![F::zero(); sh.len()];
    let dir = sub3(mu, view.center);
    let d_dir = evaluate_sh_backward(&sh, dir, sh_degree, up.d_color, &mut d_sh);
    for a in 0..3 {
        d_mu[a] += d_dir[a];
    }

    // Σ = M Mᵀ with M = R S; dL/dM = 2 dΣ M (dΣ symmetric)
    let mut m = r;
    for row in m.iter_mut() {
        for (v, s) in row.iter_mut().zip(scale) {
            *v *= s;
        }
    }
    let d_m = mat3_mul(&d_sigma, &m).map(|row| row.map(|v| two * v));
    let mut d_log_scale = [F::zero(); 3];
    let mut d_r = [[F::zero(); 3]; 3];
    for k in 0..3 {
        let mut ds = F::zero();
        for i in 0..3 {
            ds += r[i][k] * d_m[i][k];
            d_r[i][k] = scale[k] * d_m[i][k];
        }
        d_log_scale[k] = ds * scale[k];
    }

    let d_qu = rotation_grad_to_quat(qu, &d_r);
    let proj = d_qu[0] * qu[0] + d_qu[1] * qu[1] + d_qu[2] * qu[2] + d_qu[3] * qu[3];
    let d_q: [F; 4] = [0, 1, 2, 3].map(|a| (d_qu[a] - qu[a] * proj) / qn);

    let sig = sigmoid(g.opacity_logit);
    let d_logit = up.d_opacity.f64() * sig * (1.0 - sig);

    Gaussian3D {
        mu: d_mu.map(Real::f64),
        rot: d_q.map(Real::f64),
        log_scale: d_log_scale.map(Real::f64),
        opacity_logit: d_logit,
        sh: d_sh.into_iter().map(Real::f64).collect(),
    }
}

/// Gradient of the rotation matrix of a unit quaternion `(w, x, y, z)`.
fn rotation_grad_to_quat<F: Real>(q: [F; 4], g: &Mat3<F>) -> [F; 4] {
    let [w, x, y, z] = q;
    let two = F::of(2.0);
    let four = F::of(4.0);
    let dw = two * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let dx = two * (y * g[0][1] + z * g[0][2] + y * g[1][0] - w * g[1][2] + z * g[2][0] + w * g[2][1])
        - four * x * (g[1][1] + g[2][2]);
    let dy = two * (x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0] + z * g[2][1])
        - four * y * (g[0][0] + g[2][2]);
    let dz = two * (-w * g[0][1] + x * g[0][2] + w * g[1][0] + y * g[1][2] + x * g[2][0] + y * g[2][1])
        - four * z * (g[0][0] + g[1][1]);
    [dw, dx, dy, dz]
}
