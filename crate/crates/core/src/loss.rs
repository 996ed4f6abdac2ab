//! Image losses and quality metrics.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) with zero padding,
//! `C1 = 0.01²`, `C2 = 0.03²`, evaluated per channel and averaged over all
//! pixels and channels.

use crate::error::Result;
use crate::image::Image;
use crate::math::Real;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
pub const PSNR_CAP_DB: f64 = 100.0;

fn window<F: Real>() -> [F; WINDOW] {
    let mut w = [0.0f64; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| F::of(v / s))
}

/// Separable "same" Gaussian blur with zero padding. Self-adjoint because
/// the kernel is symmetric.
fn blur<F: Real>(src: &[F], w: usize, h: usize, k: &[F; WINDOW], tmp: &mut Vec<F>, out: &mut Vec<F>) {
    let r = WINDOW / 2;
    tmp.clear();
    tmp.resize(w * h, F::zero());
    out.clear();
    out.resize(w * h, F::zero());
    for (row, trow) in src.chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
        for (x, t) in trow.iter_mut().enumerate() {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let taps = &k[lo + r - x..=hi + r - x];
            *t = taps.iter().zip(&row[lo..=hi]).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        let orow = &mut out[y * w..(y + 1) * w];
        for yy in lo..=hi {
            let kv = k[yy + r - y];
            for (o, &t) in orow.iter_mut().zip(&tmp[yy * w..(yy + 1) * w]) {
                *o += kv * t;
            }
        }
    }
}

/// Mean SSIM and, optionally, its gradient with respect to `x`.
fn ssim_impl<F: Real>(x: &Image<F>, y: &Image<F>, mut grad: Option<&mut [F]>) -> F {
    let (w, h) = (x.width, x.height);
    let n = w * h;
    let k = window::<F>();
    let (c1, c2) = (F::of(C1), F::of(C2));
    let two = F::of(2.0);
    let norm = F::one() / F::of((n * 3) as f64);
    let mut tmp = Vec::new();
    let mut total = F::zero();
    let mut bufs: [Vec<F>; 5] = Default::default();
    for ch in 0..3 {
        let xs = x.channel(ch);
        let ys = y.channel(ch);
        let xx: Vec<F> = xs.iter().map(|&v| v * v).collect();
        let yy: Vec<F> = ys.iter().map(|&v| v * v).collect();
        let xy: Vec<F> = xs.iter().zip(&ys).map(|(&a, &b)| a * b).collect();
        for (src, dst) in [&xs, &ys, &xx, &yy, &xy].into_iter().zip(bufs.iter_mut()) {
            blur(src, w, h, &k, &mut tmp, dst);
        }
        let [mx, my, exx, eyy, exy] = &bufs;
        let mut d_mx = vec![F::zero(); if grad.is_some() { n } else { 0 }];
        let mut d_exx = d_mx.clone();
        let mut d_exy = d_mx.clone();
        for p in 0..n {
            let (ux, uy) = (mx[p], my[p]);
            let sxx = exx[p] - ux * ux;
            let syy = eyy[p] - uy * uy;
            let sxy = exy[p] - ux * uy;
            let a1 = two * ux * uy + c1;
            let a2 = two * sxy + c2;
            let b1 = ux * ux + uy * uy + c1;
            let b2 = sxx + syy + c2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            if grad.is_some() {
                let inv = F::one() / (b1 * b2);
                d_mx[p] = norm * (two * uy * (a2 - a1) * inv - two * ux * s / b1 + two * ux * s / b2);
                d_exx[p] = norm * (-s / b2);
                d_exy[p] = norm * (two * a1 * inv);
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            let mut bm = Vec::new();
            let mut bxx = Vec::new();
            let mut bxy = Vec::new();
            blur(&d_mx, w, h, &k, &mut tmp, &mut bm);
            blur(&d_exx, w, h, &k, &mut tmp, &mut bxx);
            blur(&d_exy, w, h, &k, &mut tmp, &mut bxy);
            for p in 0..n {
                g[3 * p + ch] += bm[p] + two * xs[p] * bxx[p] + ys[p] * bxy[p];
            }
        }
    }
    total * norm
}

pub fn ssim<F: Real>(a: &Image<F>, b: &Image<F>) -> Result<F> {
    a.same_shape(b)?;
    Ok(ssim_impl(a, b, None))
}

pub fn l1<F: Real>(a: &Image<F>, b: &Image<F>) -> Result<F> {
    a.same_shape(b)?;
    let s: F = a.data.iter().zip(&b.data).map(|(&x, &y)| (x - y).abs()).sum();
    Ok(s / F::of(a.data.len() as f64))
}

pub fn mse<F: Real>(a: &Image<F>, b: &Image<F>) -> Result<f64> {
    a.same_shape(b)?;
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x.f64() - y.f64()).powi(2))
        .sum();
    Ok(s / a.data.len() as f64)
}

/// Peak signal-to-noise ratio for `[0, 1]` images, capped at 100 dB.
pub fn psnr<F: Real>(a: &Image<F>, b: &Image<F>) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m < 1e-10 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)
    })
}

/// `(1 - λ) L1 + λ (1 - SSIM)`; the photometric error of a whole view.
pub fn photometric_loss<F: Real>(rendered: &Image<F>, target: &Image<F>, lambda: f64) -> Result<f64> {
    let l = l1(rendered, target)?.f64();
    let s = ssim(rendered, target)?.f64();
    Ok((1.0 - lambda) * l + lambda * (1.0 - s))
}

/// Training loss `(1 - λ) L1 + λ (1 - SSIM)` and its gradient with respect
/// to `rendered`.
pub fn training_loss<F: Real>(rendered: &Image<F>, target: &Image<F>, lambda: f64) -> Result<(F, Image<F>)> {
    rendered.same_shape(target)?;
    let lam = F::of(lambda);
    let one = F::one();
    let n = F::of(rendered.data.len() as f64);
    let mut grad = Image::zeros(rendered.width, rendered.height);
    let mut l1_sum = F::zero();
    let l1_scale = (one - lam) / n;
    for ((g, &r), &t) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = r - t;
        l1_sum += d.abs();
        *g = if d > F::zero() {
            l1_scale
        } else if d < F::zero() {
            -l1_scale
        } else {
            F::zero()
        };
    }
    let mut ssim_grad = vec![F::zero(); rendered.data.len()];
    let s = ssim_impl(rendered, target, Some(&mut ssim_grad));
    for (g, sg) in grad.data.iter_mut().zip(ssim_grad) {
        *g -= lam * sg;
    }
    let loss = (one - lam) * l1_sum / n + lam * (one - s);
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize, seed: u64) -> Image<f64> {
        let mut s = seed;
        let data = (0..w * h * 3)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        Image::from_data(w, h, data).unwrap()
    }

    #[test]
    fn identical_images() {
        let a = pattern(16, 12, 3);
        let (loss, grad) = training_loss(&a, &a, 0.2).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.data.iter().all(|g| g.abs() < 1e-12));
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn psnr_of_known_mse() {
        let a = Image::<f64>::zeros(4, 4);
        let b = Image::filled(4, 4, [0.1; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::<f64>::zeros(4, 4);
        let b = Image::<f64>::zeros(4, 5);
        assert!(training_loss(&a, &b, 0.2).is_err());
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = pattern(16, 16, 11);
        let b = pattern(16, 16, 12);
        let (_, grad) = training_loss(&a, &b, 0.2).unwrap();
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for i in (0..a.data.len()).step_by(7) {
            let mut p = a.clone();
            p.data[i] += h;
            let mut m = a.clone();
            m.data[i] -= h;
            let fd = (training_loss(&p, &b, 0.2).unwrap().0 - training_loss(&m, &b, 0.2).unwrap().0) / (2.0 * h);
            let rel = (fd - grad.data[i]).abs() / fd.abs().max(grad.data[i].abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
