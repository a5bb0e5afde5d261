//! Fixtures shared by the benchmarks.

use veinroi::synth::{render_scene, SceneSpec};
use veinroi::{GrayImage, Illumination};

/// Reduced-size test raster.
pub const SMALL: (u32, u32) = (1000, 667);
/// Native acquisition raster.
pub const FULL: (u32, u32) = (2784, 1856);

/// The unperturbed transmitted scene at `dims`.
pub fn reference_scene(dims: (u32, u32)) -> GrayImage {
    render_scene(&SceneSpec::reference(
        7,
        Illumination::Transmitted,
        dims.0,
        dims.1,
    ))
    .expect("reference scene renders")
    .0
}
