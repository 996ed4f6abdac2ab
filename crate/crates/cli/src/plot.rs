//! Minimal line charts rendered straight into an RGB buffer.

use std::path::Path;

use anyhow::{bail, Result};
use image::{Rgb, RgbImage};

const MARGIN: u32 = 24;
const COLORS: [[u8; 3]; 4] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189]];

fn draw_line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), color: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (x0 + t * (x1 - x0)).round();
        let y = (y0 + t * (y1 - y0)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Draws each series as a polyline over shared axes and saves a PNG.
pub fn line_chart(series: &[Vec<(f64, f64)>], width: u32, height: u32, path: &Path) -> Result<()> {
    let points = || series.iter().flatten();
    if points().next().is_none() {
        bail!("nothing to plot");
    }
    if width <= 2 * MARGIN || height <= 2 * MARGIN {
        bail!("plot of {width}x{height} is too small");
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        points().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x_lo, mut x_hi) = fold(|p| p.0);
    let (mut y_lo, mut y_hi) = fold(|p| p.1);
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    y_lo = y_lo.min(0.0);
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let pw = (width - 2 * MARGIN) as f64;
    let ph = (height - 2 * MARGIN) as f64;
    let to_px = |(x, y): (f64, f64)| {
        (
            MARGIN as f64 + (x - x_lo) / (x_hi - x_lo) * pw,
            MARGIN as f64 + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph,
        )
    };
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    let (ox, oy) = to_px((x_lo, y_lo));
    draw_line(&mut img, (ox, oy), (ox + pw, oy), axis);
    draw_line(&mut img, (ox, oy), (ox, oy - ph), axis);
    for (i, s) in series.iter().enumerate() {
        let color = Rgb(COLORS[i % COLORS.len()]);
        for w in s.windows(2) {
            draw_line(&mut img, to_px(w[0]), to_px(w[1]), color);
        }
        if let [only] = s.as_slice() {
            let p = to_px(*only);
            draw_line(&mut img, p, p, color);
        }
    }
    img.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_a_png_of_the_requested_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        line_chart(&[vec![(0.0, 1.0), (10.0, 5.0)], vec![(0.0, 2.0)]], 200, 100, &p).unwrap();
        let img = image::open(&p).unwrap();
        assert_eq!((img.width(), img.height()), (200, 100));
    }

    #[test]
    fn rejects_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        assert!(line_chart(&[vec![]], 200, 100, &dir.path().join("c.png")).is_err());
    }
}
