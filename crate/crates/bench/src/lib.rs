//! Fixtures shared by the benchmarks.

use vcsplat_core::io::{generate_synthetic, SynthSpec};
use vcsplat_core::{Camera, Image, Scene};

/// The default synthetic scene with its first camera and that camera's
/// ground-truth image.
pub fn benchmark_view() -> (Scene, Camera, Image<f32>) {
    let (ds, scene) = generate_synthetic(&SynthSpec::default(), None).expect("default synthetic spec is valid");
    let cam = ds.cameras[0].clone();
    let img = ds.images[0].clone();
    (scene, cam, img)
}
