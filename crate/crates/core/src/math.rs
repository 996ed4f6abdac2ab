//! Scalar trait and the handful of small fixed-size linear algebra helpers the
//! renderer needs.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the render pipeline is generic over. Training runs in
/// `f32`, gradient checks in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    #[inline(always)]
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    #[inline(always)]
    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Vec3<F> = [F; 3];
pub type Mat3<F> = [[F; 3]; 3];

#[inline]
pub fn cast3<F: Real>(v: [f64; 3]) -> Vec3<F> {
    [F::of(v[0]), F::of(v[1]), F::of(v[2])]
}

#[inline]
pub fn dot3<F: Real>(a: Vec3<F>, b: Vec3<F>) -> F {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub3<F: Real>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm3<F: Real>(a: Vec3<F>) -> F {
    dot3(a, a).sqrt()
}

#[inline]
pub fn cross3<F: Real>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn normalize3<F: Real>(a: Vec3<F>) -> Vec3<F> {
    let n = norm3(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

#[inline]
pub fn mat3_mul<F: Real>(a: &Mat3<F>, b: &Mat3<F>) -> Mat3<F> {
    let mut out = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

#[inline]
pub fn mat3_transpose<F: Real>(a: &Mat3<F>) -> Mat3<F> {
    let mut out = [[F::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

#[inline]
pub fn mat3_vec<F: Real>(a: &Mat3<F>, v: Vec3<F>) -> Vec3<F> {
    [dot3(a[0], v), dot3(a[1], v), dot3(a[2], v)]
}

/// `aᵀ v`
#[inline]
pub fn mat3_tvec<F: Real>(a: &Mat3<F>, v: Vec3<F>) -> Vec3<F> {
    [
        a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
        a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
        a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
    ]
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Eigenvalues of a symmetric 2x2 matrix packed as `(xx, xy, yy)`, largest first.
#[inline]
pub fn sym2_eigenvalues<F: Real>(m: [F; 3]) -> (F, F) {
    let half = F::of(0.5);
    let mid = half * (m[0] + m[2]);
    let disc = (half * (m[0] - m[2])).powi(2) + m[1] * m[1];
    let r = disc.sqrt();
    (mid + r, mid - r)
}

/// Inverse of a symmetric 2x2 matrix packed as `(xx, xy, yy)`; `None` when the
/// determinant is not positive.
#[inline]
pub fn sym2_inverse<F: Real>(m: [F; 3]) -> Option<[F; 3]> {
    let det = m[0] * m[2] - m[1] * m[1];
    if det <= F::zero() || !det.is_finite() {
        return None;
    }
    let inv = F::one() / det;
    Some([m[2] * inv, -m[1] * inv, m[0] * inv])
}
