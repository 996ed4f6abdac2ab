//! Gaussian scene representation.
//!
//! Parameters are stored pre-activation: `log_scale` goes through `exp`,
//! `opacity_logit` through the logistic sigmoid, so the optimizer works on an
//! unconstrained space. Quaternions are `(w, x, y, z)` and are normalized
//! whenever a rotation matrix is built from them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{logit, mat3_mul, mat3_transpose, sigmoid, Mat3, Real};
use crate::sh::{num_sh_coeffs, SH_C0};

/// Opacity assigned to freshly initialized Gaussians.
pub const INIT_OPACITY: f64 = 0.1;

/// Scale used for a point with no neighbours at all.
const ISOLATED_POINT_SCALE: f64 = 0.01;

const MIN_NEIGHBOR_DISTANCE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D {
    pub mu: [f64; 3],
    pub rot: [f64; 4],
    pub log_scale: [f64; 3],
    pub opacity_logit: f64,
    /// Spherical harmonic coefficients, coefficient-major: `sh[3 * k + channel]`.
    pub sh: Vec<f64>,
}

impl Gaussian3D {
    /// A Gaussian with every parameter zero, used as a gradient / moment buffer.
    pub fn zeros(sh_degree: usize) -> Self {
        Self {
            mu: [0.0; 3],
            rot: [0.0; 4],
            log_scale: [0.0; 3],
            opacity_logit: 0.0,
            sh: vec![0.0; 3 * num_sh_coeffs(sh_degree)],
        }
    }

    pub fn scale(&self) -> [f64; 3] {
        self.log_scale.map(f64::exp)
    }

    pub fn max_scale(&self) -> f64 {
        self.scale().into_iter().fold(f64::MIN, f64::max)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn covariance(&self) -> Result<Mat3<f64>> {
        covariance_3d(self.rot, self.scale())
    }

    /// RGB of the zeroth-order (view independent) SH term.
    pub fn base_color(&self) -> [f64; 3] {
        [0, 1, 2].map(|c| (0.5 + SH_C0 * self.sh[c]).max(0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|v| v.is_finite())
            && self.rot.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.sh.iter().all(|v| v.is_finite())
    }

    /// Mutable views of every parameter block, tagged by optimizer group.
    pub fn groups_mut(&mut self) -> [(ParamGroup, &mut [f64]); 6] {
        let (dc, rest) = self.sh.split_at_mut(3);
        [
            (ParamGroup::Position, &mut self.mu[..]),
            (ParamGroup::ShDc, dc),
            (ParamGroup::ShRest, rest),
            (ParamGroup::Opacity, std::slice::from_mut(&mut self.opacity_logit)),
            (ParamGroup::Scale, &mut self.log_scale[..]),
            (ParamGroup::Rotation, &mut self.rot[..]),
        ]
    }

    pub fn groups(&self) -> [(ParamGroup, &[f64]); 6] {
        let (dc, rest) = self.sh.split_at(3);
        [
            (ParamGroup::Position, &self.mu[..]),
            (ParamGroup::ShDc, dc),
            (ParamGroup::ShRest, rest),
            (ParamGroup::Opacity, std::slice::from_ref(&self.opacity_logit)),
            (ParamGroup::Scale, &self.log_scale[..]),
            (ParamGroup::Rotation, &self.rot[..]),
        ]
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Gaussian3D) {
        for ((_, dst), (_, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn clear(&mut self) {
        for (_, block) in self.groups_mut() {
            block.fill(0.0);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    ShDc,
    ShRest,
    Opacity,
    Scale,
    Rotation,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Position,
        ParamGroup::ShDc,
        ParamGroup::ShRest,
        ParamGroup::Opacity,
        ParamGroup::Scale,
        ParamGroup::Rotation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::ShDc => "sh_dc",
            ParamGroup::ShRest => "sh_rest",
            ParamGroup::Opacity => "opacity",
            ParamGroup::Scale => "scale",
            ParamGroup::Rotation => "rotation",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub gaussians: Vec<Gaussian3D>,
    pub sh_degree: usize,
}

impl Scene {
    pub fn new(gaussians: Vec<Gaussian3D>, sh_degree: usize) -> Result<Self> {
        if sh_degree > 3 {
            return Err(Error::InvalidParameter(format!(
                "sh degree {sh_degree} exceeds 3"
            )));
        }
        let expected = 3 * num_sh_coeffs(sh_degree);
        if let Some(g) = gaussians.iter().find(|g| g.sh.len() != expected) {
            return Err(Error::DimensionMismatch(format!(
                "gaussian has {} sh values, degree {sh_degree} needs {expected}",
                g.sh.len()
            )));
        }
        Ok(Self {
            gaussians,
            sh_degree,
        })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Rotation matrix of a (not necessarily unit) quaternion `(w, x, y, z)`.
#[inline]
pub fn quat_to_rotation<F: Real>(q: [F; 4]) -> Mat3<F> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    let one = F::one();
    let two = F::of(2.0);
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}

/// `R S Sᵀ Rᵀ` for rotation `rot` and per-axis standard deviations `scale`.
pub fn covariance_3d<F: Real>(rot: [F; 4], scale: [F; 3]) -> Result<Mat3<F>> {
    if rot.iter().chain(scale.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite rotation or scale".into()));
    }
    if scale.iter().any(|&s| s <= F::zero()) {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    if rot.iter().all(|&v| v == F::zero()) {
        return Err(Error::InvalidParameter("zero quaternion".into()));
    }
    Ok(covariance_unchecked(&quat_to_rotation(rot), scale))
}

#[inline]
pub(crate) fn covariance_unchecked<F: Real>(r: &Mat3<F>, scale: [F; 3]) -> Mat3<F> {
    let mut m = *r;
    for row in m.iter_mut() {
        for (v, s) in row.iter_mut().zip(scale) {
            *v *= s;
        }
    }
    mat3_mul(&m, &mat3_transpose(&m))
}

/// Builds one isotropic Gaussian per input point. Scale is the mean distance
/// to the (up to) three nearest neighbours, opacity starts at 0.1 and the DC
/// color term reproduces the point color.
pub fn init_from_points(points: &[([f64; 3], [f64; 3])], sh_degree: usize) -> Result<Scene> {
    if points.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    let positions: Vec<[f64; 3]> = points.iter().map(|(p, _)| *p).collect();
    let scales = mean_neighbor_distances(&positions, 3);
    let gaussians = points
        .iter()
        .zip(scales)
        .map(|((pos, color), scale)| {
            let mut g = Gaussian3D::zeros(sh_degree);
            g.mu = *pos;
            g.rot = [1.0, 0.0, 0.0, 0.0];
            g.log_scale = [scale.ln(); 3];
            g.opacity_logit = logit(INIT_OPACITY);
            for c in 0..3 {
                g.sh[c] = (color[c] - 0.5) / SH_C0;
            }
            g
        })
        .collect();
    Scene::new(gaussians, sh_degree)
}

/// Mean Euclidean distance from each point to its `k` nearest neighbours,
/// using fewer neighbours when the cloud is smaller than `k + 1`.
pub fn mean_neighbor_distances(positions: &[[f64; 3]], k: usize) -> Vec<f64> {
    if positions.len() < 2 {
        return vec![ISOLATED_POINT_SCALE; positions.len()];
    }
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best: Vec<f64> = Vec::with_capacity(k + 1);
            for (j, q) in positions.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                if best.len() < k || d2 < best[best.len() - 1] {
                    let at = best.partition_point(|&b| b <= d2);
                    best.insert(at, d2);
                    best.truncate(k);
                }
            }
            let mean = best.iter().map(|d2| d2.sqrt()).sum::<f64>() / best.len() as f64;
            mean.max(MIN_NEIGHBOR_DISTANCE)
        })
        .collect()
}
