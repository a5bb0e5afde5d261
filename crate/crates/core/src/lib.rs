//! Peg-referenced ROI extraction for near-infrared hand-vein images.
//!
//! The pipeline: exposure normalization, Canny edges, circular Hough search
//! for the two scanner pegs, scale from the peg diameter, and a rotated
//! square crop resampled to 500x500. [`synth`] renders scenes with ground
//! truth; [`dataset`] builds and checks capture manifests.

// `!(x > 0.0)` is the idiom used throughout to reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod edge;
pub mod enhance;
pub mod error;
pub mod hough;
pub mod image;
pub mod overlay;
pub mod profile;
pub mod roi;
pub mod synth;

pub use dataset::{CaptureRecord, Convention, Hand, Manifest, SubjectRecord};
pub use edge::{CannyParams, EdgeMap, GradientField};
pub use enhance::{EnhanceMode, EnhanceParams};
pub use error::{Error, Result, Stage};
pub use hough::{CircleHit, HoughParams};
pub use image::{FloatImage, GrayImage};
pub use profile::{Illumination, IlluminationProfile};
pub use roi::{extract, extract_with, ExtractOptions, PegPair, RoiResult, RoiSpec};
pub use synth::{GroundTruth, SceneSpec};
