//! Differentiable 3D Gaussian splatting on the CPU.
//!
//! The crate covers the full training path: scene representation, EWA
//! projection, tile binning (3-sigma boxes or opacity-aware compact boxes),
//! depth-ordered alpha blending with an analytic backward pass, the
//! multi-view consistent densification and pruning scores, Adam, and the
//! dataset / checkpoint formats used by the command line tool.

pub mod adc;
pub mod camera;
pub mod config;
pub mod error;
pub mod image;
pub mod io;
pub mod loss;
pub mod math;
pub mod optim;
pub mod raster;
pub mod render;
pub mod scene;
pub mod schedule;
pub mod sh;
pub mod train;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use adc::{ErrorMaps, ScoreTable};
pub use camera::{Camera, ProjectedGaussian};
pub use config::{Binning, TrainConfig};
pub use error::{Error, Result};
pub use image::Image;
pub use io::dataset::Dataset;
pub use math::Real;
pub use raster::{FootprintCounter, RenderOutputs, TileGrid};
pub use scene::{Gaussian3D, Scene};
pub use train::{run_training, LogRow, TrainEvent, TrainObserver, TrainResult};
