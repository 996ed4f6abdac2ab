//! Files on disk: datasets, checkpoints, PNG images, synthetic scenes.

pub mod checkpoint;
pub mod dataset;
pub mod ply;
pub mod synth;

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::Real;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dataset::{load_dataset, save_dataset};
pub use synth::{generate_synthetic, SynthSpec};

/// Writes an 8-bit RGB PNG (values clamped to `[0, 1]`).
pub fn save_png<F: Real>(img: &Image<F>, path: &Path) -> Result<()> {
    ::image::save_buffer(
        path,
        &img.to_rgb8(),
        img.width as u32,
        img.height as u32,
        ::image::ExtendedColorType::Rgb8,
    )?;
    Ok(())
}

/// Reads a PNG as RGB in `[0, 1]`; alpha and 16-bit channels are dropped to 8-bit RGB.
pub fn load_png<F: Real>(path: &Path) -> Result<Image<F>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let decoded = ::image::open(path).map_err(|e| Error::Malformed {
        what: "PNG",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    Image::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}
