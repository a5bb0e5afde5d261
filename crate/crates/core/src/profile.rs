//! Per-illumination parameter bundles.
//!
//! Geometric quantities (peg diameter, radius search range, peg separation,
//! detection downscale) are stored in *reference pixels*: pixels of the
//! native 2784x1856 acquisition raster. [`IlluminationProfile::resolve`]
//! converts them to the pixel grid of a concrete image by the width ratio, so
//! one profile serves both native captures and reduced-size test renders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::edge::CannyParams;
use crate::enhance::{EnhanceMode, EnhanceParams};
use crate::error::{Error, Result};
use crate::hough::{HoughParams, RefineWindow};

/// Native acquisition raster, width x height.
pub const REFERENCE_DIMS: (u32, u32) = (2784, 1856);
/// Canonical ROI side in pixels.
pub const ROI_SIDE: u32 = 500;
pub const TRANSMITTED_WAVELENGTH_NM: u32 = 950;
pub const REFLECTED_WAVELENGTH_NM: u32 = 940;
/// Camera filter cut-off: light below this wavelength is blocked.
pub const CAMERA_CUTOFF_NM: u32 = 830;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Illumination {
    Transmitted,
    Reflected,
}

impl Illumination {
    pub const ALL: [Illumination; 2] = [Illumination::Transmitted, Illumination::Reflected];

    pub fn as_str(self) -> &'static str {
        match self {
            Illumination::Transmitted => "transmitted",
            Illumination::Reflected => "reflected",
        }
    }

    pub fn wavelength_nm(self) -> u32 {
        match self {
            Illumination::Transmitted => TRANSMITTED_WAVELENGTH_NM,
            Illumination::Reflected => REFLECTED_WAVELENGTH_NM,
        }
    }
}

impl fmt::Display for Illumination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Illumination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transmitted" => Ok(Illumination::Transmitted),
            "reflected" => Ok(Illumination::Reflected),
            other => Err(Error::InvalidParameter(format!(
                "unknown illumination {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationProfile {
    pub name: Illumination,
    pub wavelength_nm: u32,
    pub canny: CannyParams,
    /// Radii and `min_center_dist` in reference pixels.
    pub hough: HoughParams,
    /// Peg diameter at the reference plate height, reference pixels.
    pub d_nominal: f64,
    pub roi_side_nominal: u32,
    /// ROI-center offset from the peg midpoint along the peg-axis normal, in
    /// units of peg separation. Magnitude only matters; the offset always
    /// points toward the image center.
    pub roi_offset_factor: f64,
    /// Admissible peg separation at scale 1, reference pixels.
    pub separation_range: (f64, f64),
    /// Max `|r1 - r2| / max(r1, r2)` for a peg pair.
    pub radius_similarity: f64,
    /// Minimum refined score for a circle to count as a peg.
    pub min_peg_score: f64,
    pub reference_width: u32,
    /// Hough downscale factor at the reference width.
    pub detect_downscale: u32,
    pub refine: RefineWindow,
    pub enhance: EnhanceParams,
}

impl IlluminationProfile {
    pub fn transmitted() -> Self {
        IlluminationProfile {
            name: Illumination::Transmitted,
            wavelength_nm: TRANSMITTED_WAVELENGTH_NM,
            canny: CannyParams::new(1.5, 0.12, 0.30),
            hough: HoughParams {
                r_min: 30,
                r_max: 70,
                r_step: 1,
                vote_threshold: 0.25,
                min_center_dist: 40.0,
                use_gradient: true,
                max_hits: 12,
            },
            // measured on the synthetic reference scene (drawn at 100)
            d_nominal: 99.86,
            roi_side_nominal: ROI_SIDE,
            roi_offset_factor: -0.9,
            separation_range: (480.0, 720.0),
            radius_similarity: 0.2,
            min_peg_score: 0.75,
            reference_width: REFERENCE_DIMS.0,
            detect_downscale: 4,
            refine: RefineWindow::default(),
            enhance: EnhanceParams {
                tile_grid: (8, 8),
                clip_limit: 2.0,
                mode: EnhanceMode::LocalAdaptive,
            },
        }
    }

    pub fn reflected() -> Self {
        IlluminationProfile {
            name: Illumination::Reflected,
            wavelength_nm: REFLECTED_WAVELENGTH_NM,
            canny: CannyParams::new(1.5, 0.10, 0.25),
            ..Self::transmitted()
        }
    }

    pub fn for_illumination(ill: Illumination) -> Self {
        match ill {
            Illumination::Transmitted => Self::transmitted(),
            Illumination::Reflected => Self::reflected(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.canny.validate()?;
        self.hough.validate()?;
        self.enhance.validate()?;
        let bad = |m: &str| Err(Error::Config(format!("profile {}: {m}", self.name)));
        if !(self.d_nominal > 0.0) {
            return bad("d_nominal must be > 0");
        }
        if self.roi_side_nominal != ROI_SIDE {
            return bad("roi_side_nominal must be 500");
        }
        if !(self.separation_range.0 > 0.0 && self.separation_range.0 < self.separation_range.1) {
            return bad("separation_range must satisfy 0 < min < max");
        }
        if !(0.0..1.0).contains(&self.radius_similarity) {
            return bad("radius_similarity must be in [0, 1)");
        }
        if self.reference_width == 0 || self.detect_downscale == 0 {
            return bad("reference_width and detect_downscale must be positive");
        }
        if !self.roi_offset_factor.is_finite() {
            return bad("roi_offset_factor must be finite");
        }
        Ok(())
    }

    /// Convert reference-pixel quantities to the grid of an image `width` pixels wide.
    pub fn resolve(&self, width: u32) -> ResolvedProfile {
        let k = width as f64 / self.reference_width as f64;
        let hough = HoughParams {
            r_min: ((self.hough.r_min as f64 * k).floor() as u32).max(1),
            r_max: ((self.hough.r_max as f64 * k).ceil() as u32).max(1),
            min_center_dist: self.hough.min_center_dist * k,
            ..self.hough
        };
        ResolvedProfile {
            profile: self.clone(),
            pixel_scale: k,
            hough,
            d_nominal_px: self.d_nominal * k,
            separation_px: (self.separation_range.0 * k, self.separation_range.1 * k),
            downscale: ((self.detect_downscale as f64 * k).round() as u32).max(1),
        }
    }
}

/// A profile bound to one image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedProfile {
    pub profile: IlluminationProfile,
    /// Image pixels per reference pixel.
    pub pixel_scale: f64,
    pub hough: HoughParams,
    pub d_nominal_px: f64,
    pub separation_px: (f64, f64),
    pub downscale: u32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for ill in Illumination::ALL {
            let p = IlluminationProfile::for_illumination(ill);
            p.validate().unwrap();
            assert_eq!(p.wavelength_nm, ill.wavelength_nm());
            assert_eq!(p.roi_side_nominal, 500);
        }
        assert_eq!(IlluminationProfile::transmitted().wavelength_nm, 950);
        assert_eq!(IlluminationProfile::reflected().wavelength_nm, 940);
    }

    #[test]
    fn resolve_scales_geometry() {
        let p = IlluminationProfile::transmitted();
        let native = p.resolve(2784);
        assert_eq!(native.pixel_scale, 1.0);
        assert_eq!(native.hough.r_min, 30);
        assert_eq!(native.hough.r_max, 70);
        assert_eq!(native.downscale, 4);
        let small = p.resolve(1000);
        assert_eq!(small.downscale, 1);
        assert_eq!(small.hough.r_min, 10);
        assert_eq!(small.hough.r_max, 26);
        assert!((small.d_nominal_px - 99.86 * 1000.0 / 2784.0).abs() < 1e-9);
    }

    #[test]
    fn validation_catches_bad_geometry() {
        let mut p = IlluminationProfile::transmitted();
        p.roi_side_nominal = 400;
        assert!(p.validate().is_err());
        let mut p = IlluminationProfile::transmitted();
        p.separation_range = (700.0, 600.0);
        assert!(p.validate().is_err());
        let mut p = IlluminationProfile::transmitted();
        p.d_nominal = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn illumination_parse() {
        assert_eq!(
            "reflected".parse::<Illumination>().unwrap(),
            Illumination::Reflected
        );
        assert!("daylight".parse::<Illumination>().is_err());
    }
}
