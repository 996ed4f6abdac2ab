use crate::error::{Error, Result};
use crate::math::Real;

/// Row-major RGB image with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<F = f32> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<F>,
}

impl<F: Real> Image<F> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![F::zero(); width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [F; 3]) -> Self {
        let mut img = Self::zeros(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [F; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [F; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn cast<G: Real>(&self) -> Image<G> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| G::of(v.f64())).collect(),
        }
    }

    pub fn same_shape<G>(&self, other: &Image<G>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Quantizes to 8 bits per channel, clamping to `[0, 1]`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.f64().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_data(
            width,
            height,
            bytes.iter().map(|&b| F::of(b as f64 / 255.0)).collect(),
        )
    }

    /// Extracts one channel as a dense plane.
    pub fn channel(&self, c: usize) -> Vec<F> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }
}
