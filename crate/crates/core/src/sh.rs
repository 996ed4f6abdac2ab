//! Real spherical harmonics up to degree 3, in the layout common to Gaussian
//! splatting checkpoints: the DC term first, `+0.5` offset, clamped at zero.

use crate::math::{Real, Vec3};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const fn num_sh_coeffs(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values `Y_k(d)` for `k < (degree+1)²` and, when `grad` is given,
/// their partial derivatives with respect to the (unit) direction components.
fn basis<F: Real>(degree: usize, d: Vec3<F>, out: &mut [F; 16], mut grad: Option<&mut [Vec3<F>; 16]>) {
    let c = F::of;
    let [x, y, z] = d;
    let zero = F::zero();
    out[0] = c(SH_C0);
    if let Some(g) = grad.as_deref_mut() {
        *g = [[zero; 3]; 16];
    }
    if degree == 0 {
        return;
    }
    let c1 = c(SH_C1);
    out[1] = -c1 * y;
    out[2] = c1 * z;
    out[3] = -c1 * x;
    if let Some(g) = grad.as_deref_mut() {
        g[1] = [zero, -c1, zero];
        g[2] = [zero, zero, c1];
        g[3] = [-c1, zero, zero];
    }
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let two = c(2.0);
    let c2 = SH_C2.map(c);
    out[4] = c2[0] * xy;
    out[5] = c2[1] * yz;
    out[6] = c2[2] * (two * zz - xx - yy);
    out[7] = c2[3] * xz;
    out[8] = c2[4] * (xx - yy);
    if let Some(g) = grad.as_deref_mut() {
        g[4] = [c2[0] * y, c2[0] * x, zero];
        g[5] = [zero, c2[1] * z, c2[1] * y];
        g[6] = [-two * c2[2] * x, -two * c2[2] * y, c(4.0) * c2[2] * z];
        g[7] = [c2[3] * z, zero, c2[3] * x];
        g[8] = [two * c2[4] * x, -two * c2[4] * y, zero];
    }
    if degree == 2 {
        return;
    }
    let c3 = SH_C3.map(c);
    let three = c(3.0);
    let four = c(4.0);
    let six = c(6.0);
    out[9] = c3[0] * y * (three * xx - yy);
    out[10] = c3[1] * xy * z;
    out[11] = c3[2] * y * (four * zz - xx - yy);
    out[12] = c3[3] * z * (two * zz - three * xx - three * yy);
    out[13] = c3[4] * x * (four * zz - xx - yy);
    out[14] = c3[5] * z * (xx - yy);
    out[15] = c3[6] * x * (xx - three * yy);
    if let Some(g) = grad {
        g[9] = [c3[0] * six * xy, c3[0] * (three * xx - three * yy), zero];
        g[10] = [c3[1] * yz, c3[1] * xz, c3[1] * xy];
        g[11] = [
            -two * c3[2] * xy,
            c3[2] * (four * zz - xx - three * yy),
            c(8.0) * c3[2] * yz,
        ];
        g[12] = [
            -six * c3[3] * xz,
            -six * c3[3] * yz,
            c3[3] * (six * zz - three * xx - three * yy),
        ];
        g[13] = [
            c3[4] * (four * zz - three * xx - yy),
            -two * c3[4] * xy,
            c(8.0) * c3[4] * xz,
        ];
        g[14] = [two * c3[5] * xz, -two * c3[5] * yz, c3[5] * (xx - yy)];
        g[15] = [
            c3[6] * (three * xx - three * yy),
            -six * c3[6] * xy,
            zero,
        ];
    }
}

/// Color seen along `view_dir` (unit length). `sh` is coefficient-major and
/// may hold more coefficients than `degree` uses.
pub fn evaluate_sh<F: Real>(sh: &[F], view_dir: Vec3<F>, degree: usize) -> [F; 3] {
    let mut b = [F::zero(); 16];
    basis(degree, view_dir, &mut b, None);
    let mut rgb = [F::of(0.5); 3];
    for (k, bk) in b.iter().enumerate().take(num_sh_coeffs(degree)) {
        for (c, v) in rgb.iter_mut().enumerate() {
            *v += *bk * sh[3 * k + c];
        }
    }
    rgb.map(|v| v.max(F::zero()))
}

/// Backward of [`evaluate_sh`] at an unnormalized direction `dir`.
///
/// Accumulates `d_sh` and returns the gradient with respect to `dir` itself
/// (the normalization is differentiated through).
pub fn evaluate_sh_backward<F: Real>(
    sh: &[F],
    dir: Vec3<F>,
    degree: usize,
    d_rgb: [F; 3],
    d_sh: &mut [F],
) -> Vec3<F> {
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let unit = dir.map(|v| v / len);
    let mut b = [F::zero(); 16];
    let mut g = [[F::zero(); 3]; 16];
    basis(degree, unit, &mut b, Some(&mut g));
    let n = num_sh_coeffs(degree);

    // Clamp at zero kills the gradient of that channel.
    let mut raw = [F::of(0.5); 3];
    for k in 0..n {
        for (c, v) in raw.iter_mut().enumerate() {
            *v += b[k] * sh[3 * k + c];
        }
    }
    let d_raw: [F; 3] = [0, 1, 2].map(|c| if raw[c] < F::zero() { F::zero() } else { d_rgb[c] });

    let mut d_unit = [F::zero(); 3];
    for k in 0..n {
        let mut dk = F::zero();
        for c in 0..3 {
            d_sh[3 * k + c] += b[k] * d_raw[c];
            dk += sh[3 * k + c] * d_raw[c];
        }
        for a in 0..3 {
            d_unit[a] += g[k][a] * dk;
        }
    }
    // d(unit)/d(dir) = (I - u uᵀ) / |dir|
    let proj = d_unit[0] * unit[0] + d_unit[1] * unit[1] + d_unit[2] * unit[2];
    [0, 1, 2].map(|a| (d_unit[a] - unit[a] * proj) / len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_only_is_direction_independent() {
        let mut sh = vec![0.0f64; 48];
        sh[0] = 1.0;
        sh[1] = -0.5;
        sh[2] = 0.25;
        for d in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.0]] {
            let rgb = evaluate_sh(&sh, d, 0);
            assert!((rgb[0] - (0.5 + 0.282095 * 1.0)).abs() < 1e-6);
            assert!((rgb[1] - (0.5 - 0.282095 * 0.5)).abs() < 1e-6);
            assert!((rgb[2] - (0.5 + 0.282095 * 0.25)).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_coefficients_give_mid_grey() {
        let sh = vec![0.0f64; 48];
        assert_eq!(evaluate_sh(&sh, [0.0, 0.6, 0.8], 3), [0.5; 3]);
    }

    #[test]
    fn clamps_at_zero() {
        let mut sh = vec![0.0f64; 3];
        sh[0] = -10.0;
        assert_eq!(evaluate_sh(&sh, [0.0, 0.0, 1.0], 0)[0], 0.0);
    }

    #[test]
    fn degree_one_depends_on_view_direction() {
        // Independent table of the degree-1 real basis: Y = C1 * (-y, z, -x).
        let y1 = |d: [f64; 3]| [-SH_C1 * d[1], SH_C1 * d[2], -SH_C1 * d[0]];
        let mut sh = vec![0.0f64; 12];
        sh[3 * 2] = 0.4; // z-coefficient, red channel
        let up = [0.0, 0.0, 1.0];
        let down = [0.0, 0.0, -1.0];
        let a = evaluate_sh(&sh, up, 1);
        let b = evaluate_sh(&sh, down, 1);
        assert!((a[0] - (0.5 + y1(up)[1] * 0.4)).abs() < 1e-12);
        assert!((b[0] - (0.5 + y1(down)[1] * 0.4)).abs() < 1e-12);
        assert!(a[0] > b[0]);
        assert_eq!(a[1], b[1]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let sh: Vec<f64> = (0..48).map(|i| ((i * 37 % 17) as f64 - 8.0) * 0.05).collect();
        let dir = [0.3, -0.7, 1.2];
        let d_rgb = [0.7, -0.2, 0.4];
        let loss = |sh: &[f64], dir: [f64; 3]| {
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let rgb = evaluate_sh(sh, dir.map(|v| v / n), 3);
            rgb[0] * d_rgb[0] + rgb[1] * d_rgb[1] + rgb[2] * d_rgb[2]
        };
        let mut d_sh = vec![0.0; 48];
        let d_dir = evaluate_sh_backward(&sh, dir, 3, d_rgb, &mut d_sh);
        let h = 1e-6;
        for a in 0..3 {
            let mut p = dir;
            let mut m = dir;
            p[a] += h;
            m[a] -= h;
            let fd = (loss(&sh, p) - loss(&sh, m)) / (2.0 * h);
            assert!((fd - d_dir[a]).abs() < 1e-7, "dir {a}: {fd} vs {}", d_dir[a]);
        }
        for k in 0..48 {
            let mut p = sh.clone();
            let mut m = sh.clone();
            p[k] += h;
            m[k] -= h;
            let fd = (loss(&p, dir) - loss(&m, dir)) / (2.0 * h);
            assert!((fd - d_sh[k]).abs() < 1e-7, "sh {k}: {fd} vs {}", d_sh[k]);
        }
    }
}
