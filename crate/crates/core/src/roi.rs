//! From two circles to a canonical ROI: peg-pair selection, scale inference
//! from peg diameter, square placement off the peg axis, and rotated cropping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage, StageExt};
use crate::hough::{detect_circles_multiscale, CircleHit};
use crate::image::{normalize_exposure, resample, GrayImage};
use crate::profile::{IlluminationProfile, ResolvedProfile, ROI_SIDE};

/// Two admissible pairs whose combined scores are within this fraction are flagged ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PegPair {
    pub left: CircleHit,
    pub right: CircleHit,
    /// Angle of the left-to-right center line, radians.
    pub axis_angle: f64,
    pub separation: f64,
    /// Another admissible pair scored within 5% of this one.
    pub ambiguous: bool,
}

impl PegPair {
    pub fn from_hits(a: CircleHit, b: CircleHit) -> Self {
        let (left, right) = if (a.cx, a.cy) <= (b.cx, b.cy) {
            (a, b)
        } else {
            (b, a)
        };
        let (dx, dy) = (right.cx - left.cx, right.cy - left.cy);
        PegPair {
            left,
            right,
            axis_angle: dy.atan2(dx),
            separation: dx.hypot(dy),
            ambiguous: false,
        }
    }

    pub fn midpoint(&self) -> (f64, f64) {
        (
            (self.left.cx + self.right.cx) / 2.0,
            (self.left.cy + self.right.cy) / 2.0,
        )
    }

    pub fn mean_radius(&self) -> f64 {
        (self.left.r + self.right.r) / 2.0
    }
}

/// Crop geometry in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub center: (f64, f64),
    /// `round(500 * scale)`, in reference pixels.
    pub side: u32,
    /// Orientation of the square's base, radians.
    pub rotation: f64,
    /// Image pixels per reference pixel; 1 for native-resolution captures.
    pub pixel_scale: f64,
    /// The center was translated to keep the square inside the image.
    pub clamped: bool,
}

impl RoiSpec {
    /// Side length of the crop in image pixels.
    pub fn side_px(&self) -> f64 {
        self.side as f64 * self.pixel_scale
    }

    /// Corners in image coordinates, counter-clockwise from the top-left.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let h = self.side_px() / 2.0;
        let (s, c) = self.rotation.sin_cos();
        [(-h, -h), (h, -h), (h, h), (-h, h)]
            .map(|(u, v)| (self.center.0 + c * u - s * v, self.center.1 + s * u + c * v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiResult {
    pub roi: GrayImage,
    pub spec: RoiSpec,
    /// Observed over nominal peg diameter.
    pub scale: f64,
    pub pegs: PegPair,
    /// Every circle considered during pair selection, best first.
    pub hits: Vec<CircleHit>,
}

/// Highest combined-score pair with plausible separation and similar radii.
pub fn select_peg_pair(hits: &[CircleHit], profile: &ResolvedProfile) -> Result<PegPair> {
    let p = &profile.profile;
    let admissible: Vec<&CircleHit> = hits.iter().filter(|h| h.score >= p.min_peg_score).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..admissible.len() {
        for j in i + 1..admissible.len() {
            let (a, b) = (admissible[i], admissible[j]);
            let rmax = a.r.max(b.r);
            if (a.r - b.r).abs() / rmax > p.radius_similarity {
                continue;
            }
            let scale = (a.r + b.r) / profile.d_nominal_px;
            let sep = (a.cx - b.cx).hypot(a.cy - b.cy);
            if sep < profile.separation_px.0 * scale || sep > profile.separation_px.1 * scale {
                continue;
            }
            pairs.push((a.score + b.score, i, j));
        }
    }
    // stable: equal scores keep enumeration order
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let Some(&(best, i, j)) = pairs.first() else {
        return Err(Error::NoPegsFound {
            candidates: hits.len(),
            admissible: admissible.len(),
        });
    };
    let mut pair = PegPair::from_hits(*admissible[i], *admissible[j]);
    pair.ambiguous = pairs
        .get(1)
        .is_some_and(|&(s, _, _)| s >= best * (1.0 - AMBIGUITY_MARGIN));
    Ok(pair)
}

/// Mean observed diameter over nominal diameter.
pub fn infer_scale(pair: &PegPair, profile: &ResolvedProfile) -> f64 {
    pair.mean_radius() * 2.0 / profile.d_nominal_px
}

/// Places the square: side from scale, base parallel to the peg axis, center
/// offset from the peg midpoint along the axis normal toward the image
/// center. A square that pokes out of the image is shifted back in and flagged.
pub fn compute_roi(
    pair: &PegPair,
    scale: f64,
    profile: &ResolvedProfile,
    img_dims: (u32, u32),
) -> Result<RoiSpec> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale must be > 0, got {scale}"
        )));
    }
    let p = &profile.profile;
    let side = (p.roi_side_nominal as f64 * scale).round() as u32;
    if side == 0 {
        return Err(Error::RoiUnplaceable("ROI side rounds to zero".into()));
    }
    let rotation = pair.axis_angle;
    let (mx, my) = pair.midpoint();
    let (w, h) = (img_dims.0 as f64, img_dims.1 as f64);
    let normal = (-rotation.sin(), rotation.cos());
    let toward_center = (w - 1.0) / 2.0 - mx;
    let toward_center_y = (h - 1.0) / 2.0 - my;
    let dot = normal.0 * toward_center + normal.1 * toward_center_y;
    let sign = if dot > 0.0 {
        1.0
    } else if dot < 0.0 {
        -1.0
    } else {
        p.roi_offset_factor.signum()
    };
    let offset = p.roi_offset_factor.abs() * pair.separation * sign;
    let mut center = (mx + offset * normal.0, my + offset * normal.1);

    let side_px = side as f64 * profile.pixel_scale;
    let (s, c) = rotation.sin_cos();
    let ext = side_px / 2.0 * (c.abs() + s.abs());
    if 2.0 * ext > w || 2.0 * ext > h {
        return Err(Error::RoiUnplaceable(format!(
            "rotated {side_px:.1} px square needs {:.1} px, image is {}x{}",
            2.0 * ext,
            img_dims.0,
            img_dims.1
        )));
    }
    let fit = |c: f64, n: f64| -> f64 {
        let (lo, hi) = (-0.5 + ext, n - 0.5 - ext);
        c.clamp(lo, hi)
    };
    let clamped_center = (fit(center.0, w), fit(center.1, h));
    let clamped =
        (clamped_center.0 - center.0).abs() > 1e-9 || (clamped_center.1 - center.1).abs() > 1e-9;
    center = clamped_center;
    Ok(RoiSpec {
        center,
        side,
        rotation,
        pixel_scale: profile.pixel_scale,
        clamped,
    })
}

fn check_placeable(img: &GrayImage, spec: &RoiSpec) -> Result<()> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let tol = 0.5 + 1e-6;
    for (x, y) in spec.corners() {
        if x < -tol || y < -tol || x > w - 1.0 + tol || y > h - 1.0 + tol {
            return Err(Error::RoiUnplaceable(format!(
                "corner ({x:.1}, {y:.1}) outside {}x{}",
                img.width(),
                img.height()
            )));
        }
    }
    Ok(())
}

/// Samples the rotated square and resamples it to exactly 500x500. An
/// unrotated square with an integral pixel side is an exact sub-rectangle copy.
pub fn extract_roi(img: &GrayImage, spec: &RoiSpec) -> Result<GrayImage> {
    if spec.side == 0 || !(spec.pixel_scale > 0.0) {
        return Err(Error::RoiUnplaceable("empty ROI".into()));
    }
    check_placeable(img, spec)?;
    let side_px = spec.side_px();
    let n = side_px.round().max(1.0) as u32;
    let integral = (side_px - n as f64).abs() < 1e-9;

    let patch = if spec.rotation == 0.0 && integral {
        let half = n as f64 / 2.0;
        let max_x = img.width().saturating_sub(n) as f64;
        let max_y = img.height().saturating_sub(n) as f64;
        let x0 = (spec.center.0 - half).round().clamp(0.0, max_x) as u32;
        let y0 = (spec.center.1 - half).round().clamp(0.0, max_y) as u32;
        img.crop(x0, y0, n.min(img.width()), n.min(img.height()))?
    } else {
        let step = side_px / n as f64;
        let half = n as f64 / 2.0;
        let (s, c) = spec.rotation.sin_cos();
        GrayImage::from_fn(n, n, |i, j| {
            let u = (i as f64 - half) * step;
            let v = (j as f64 - half) * step;
            let x = spec.center.0 + c * u - s * v;
            let y = spec.center.1 + s * u + c * v;
            img.sample_bilinear(x, y).round() as u8
        })
    };
    resample(&patch, ROI_SIDE, ROI_SIDE)
}

/// Knobs that change how, never what, [`extract_with`] computes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractOptions {
    /// Parallel Hough voting and refinement inside one image.
    pub parallel_hough: bool,
}

/// Full pipeline on one image. Errors carry the failing stage.
pub fn extract(img: &GrayImage, profile: &IlluminationProfile) -> Result<RoiResult> {
    extract_with(img, profile, &ExtractOptions::default())
}

pub fn extract_with(
    img: &GrayImage,
    profile: &IlluminationProfile,
    opts: &ExtractOptions,
) -> Result<RoiResult> {
    let (pegs, hits) = locate_pegs(img, profile, opts)?;
    let res = profile.resolve(img.width());
    let scale = infer_scale(&pegs, &res);
    let spec = compute_roi(&pegs, scale, &res, img.dims()).stage(Stage::ComputeRoi)?;
    let roi = extract_roi(img, &spec).stage(Stage::ExtractRoi)?;
    Ok(RoiResult {
        roi,
        spec,
        scale,
        pegs,
        hits,
    })
}

/// The detection half of the pipeline: every circle found plus the chosen pair.
pub fn locate_pegs(
    img: &GrayImage,
    profile: &IlluminationProfile,
    opts: &ExtractOptions,
) -> Result<(PegPair, Vec<CircleHit>)> {
    let hits = detect_pegs(img, profile, opts)?;
    let res = profile.resolve(img.width());
    let pegs = select_peg_pair(&hits, &res).stage(Stage::SelectPegs)?;
    Ok((pegs, hits))
}

/// Normalization and coarse-to-fine circle detection with the profile's settings.
pub fn detect_pegs(
    img: &GrayImage,
    profile: &IlluminationProfile,
    opts: &ExtractOptions,
) -> Result<Vec<CircleHit>> {
    profile.validate()?;
    let res = profile.resolve(img.width());
    let norm = normalize_exposure(img, profile.canny.norm_low_pct, profile.canny.norm_high_pct)
        .stage(Stage::Normalize)?;
    detect_circles_multiscale(
        &norm,
        &profile.canny,
        &res.hough,
        res.downscale,
        profile.refine,
        opts.parallel_hough,
    )
    .stage(Stage::Detect)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hit(cx: f64, cy: f64, r: f64, score: f64) -> CircleHit {
        CircleHit { cx, cy, r, score }
    }

    fn native() -> ResolvedProfile {
        IlluminationProfile::transmitted().resolve(2784)
    }

    #[test]
    fn unique_pair_selected() {
        let hits = [
            hit(1600.0, 1500.0, 50.0, 0.9),
            hit(1000.0, 1500.0, 50.0, 0.8),
        ];
        let p = select_peg_pair(&hits, &native()).unwrap();
        assert_eq!(p.left.cx, 1000.0);
        assert_eq!(p.right.cx, 1600.0);
        assert_eq!(p.separation, 600.0);
        assert_eq!(p.axis_angle, 0.0);
        assert!(!p.ambiguous);
    }

    #[test]
    fn decoy_with_wrong_separation_loses() {
        let hits = [
            hit(1300.0, 700.0, 50.0, 1.0),
            hit(1000.0, 1500.0, 50.0, 0.8),
            hit(1600.0, 1500.0, 50.0, 0.8),
        ];
        let p = select_peg_pair(&hits, &native()).unwrap();
        assert_eq!((p.left.cx, p.right.cx), (1000.0, 1600.0));
    }

    #[test]
    fn mismatched_radii_rejected() {
        let hits = [
            hit(1000.0, 1500.0, 50.0, 0.9),
            hit(1600.0, 1500.0, 30.0, 0.9),
        ];
        assert!(matches!(
            select_peg_pair(&hits, &native()),
            Err(Error::NoPegsFound { .. })
        ));
    }

    #[test]
    fn single_circle_is_no_pegs() {
        let hits = [hit(1000.0, 1500.0, 50.0, 0.9)];
        assert!(matches!(
            select_peg_pair(&hits, &native()),
            Err(Error::NoPegsFound {
                candidates: 1,
                admissible: 1
            })
        ));
        assert!(matches!(
            select_peg_pair(&[], &native()),
            Err(Error::NoPegsFound { .. })
        ));
    }

    #[test]
    fn ambiguity_flagged() {
        let hits = [
            hit(1000.0, 1500.0, 50.0, 0.9),
            hit(1600.0, 1500.0, 50.0, 0.9),
            hit(1620.0, 1560.0, 50.0, 0.88),
        ];
        let p = select_peg_pair(&hits, &native()).unwrap();
        assert!(p.ambiguous);
        assert_eq!(p.right.cx, 1600.0);
    }

    #[test]
    fn scale_definition() {
        let res = native();
        let r = res.d_nominal_px / 2.0;
        let p = PegPair::from_hits(hit(1000.0, 1500.0, r, 1.0), hit(1600.0, 1500.0, r, 1.0));
        assert_eq!(infer_scale(&p, &res), 1.0);
        let p = PegPair::from_hits(
            hit(1000.0, 1500.0, 2.0 * r, 1.0),
            hit(1600.0, 1500.0, 2.0 * r, 1.0),
        );
        assert_eq!(infer_scale(&p, &res), 2.0);
    }

    #[test]
    fn roi_arithmetic() {
        let res = native();
        let p = PegPair::from_hits(
            hit(1000.0, 1500.0, 50.0, 1.0),
            hit(1600.0, 1500.0, 50.0, 1.0),
        );
        let spec = compute_roi(&p, 1.0, &res, (2784, 1856)).unwrap();
        assert_eq!(spec.center, (1300.0, 960.0));
        assert_eq!(spec.side, 500);
        assert_eq!(spec.rotation, 0.0);
        assert!(!spec.clamped);
        let spec = compute_roi(&p, 1.2, &res, (2784, 1856)).unwrap();
        assert_eq!(spec.side, 600);
        assert_eq!(spec.center, (1300.0, 960.0));
    }

    #[test]
    fn roi_offset_points_toward_image_center() {
        let res = native();
        // pegs above the image center: the ROI goes below them
        let p = PegPair::from_hits(hit(1000.0, 400.0, 50.0, 1.0), hit(1600.0, 400.0, 50.0, 1.0));
        let spec = compute_roi(&p, 1.0, &res, (2784, 1856)).unwrap();
        assert_eq!(spec.center, (1300.0, 940.0));
    }

    #[test]
    fn roi_clamped_and_unplaceable() {
        let res = native();
        let p = PegPair::from_hits(
            hit(1000.0, 1500.0, 50.0, 1.0),
            hit(1600.0, 1500.0, 50.0, 1.0),
        );
        let spec = compute_roi(&p, 1.0, &res, (2784, 1400)).unwrap();
        assert!(!spec.clamped);
        let spec = compute_roi(&p, 1.0, &res, (2784, 1200)).unwrap();
        assert!(spec.clamped);
        assert_eq!(spec.center, (1300.0, 949.5));
        assert!(matches!(
            compute_roi(&p, 4.0, &res, (2784, 1856)),
            Err(Error::RoiUnplaceable(_))
        ));
        assert!(compute_roi(&p, 0.0, &res, (2784, 1856)).is_err());
    }

    #[test]
    fn unrotated_native_roi_is_exact_copy() {
        let img = GrayImage::from_fn(800, 700, |x, y| ((x * 7 + y * 13) % 251) as u8);
        let spec = RoiSpec {
            center: (400.0, 350.0),
            side: 500,
            rotation: 0.0,
            pixel_scale: 1.0,
            clamped: false,
        };
        let roi = extract_roi(&img, &spec).unwrap();
        assert_eq!(roi, img.crop(150, 100, 500, 500).unwrap());
    }

    #[test]
    fn double_side_is_downsample_of_crop() {
        let img = GrayImage::from_fn(1200, 1100, |x, y| ((x / 3 + y / 5) % 256) as u8);
        let spec = RoiSpec {
            center: (600.0, 550.0),
            side: 1000,
            rotation: 0.0,
            pixel_scale: 1.0,
            clamped: false,
        };
        let roi = extract_roi(&img, &spec).unwrap();
        let crop = img.crop(100, 50, 1000, 1000).unwrap();
        assert_eq!(roi, resample(&crop, 500, 500).unwrap());
    }

    #[test]
    fn rotated_roi_of_rotation_invariant_pattern() {
        let img = GrayImage::from_fn(900, 900, |x, y| {
            let d = ((x as f64 - 450.0).powi(2) + (y as f64 - 450.0).powi(2)).sqrt();
            (d / 2.0).min(255.0) as u8
        });
        let a = RoiSpec {
            center: (450.0, 450.0),
            side: 500,
            rotation: 0.0,
            pixel_scale: 1.0,
            clamped: false,
        };
        let b = RoiSpec { rotation: 0.3, ..a };
        let ra = extract_roi(&img, &a).unwrap();
        let rb = extract_roi(&img, &b).unwrap();
        let mad: f64 = ra
            .data()
            .iter()
            .zip(rb.data())
            .map(|(p, q)| (*p as f64 - *q as f64).abs())
            .sum::<f64>()
            / 250000.0;
        assert!(mad < 1.0, "mad {mad}");
    }

    #[test]
    fn unplaceable_crop() {
        let img = GrayImage::new(400, 400);
        let spec = RoiSpec {
            center: (200.0, 200.0),
            side: 500,
            rotation: 0.0,
            pixel_scale: 1.0,
            clamped: false,
        };
        assert!(matches!(
            extract_roi(&img, &spec),
            Err(Error::RoiUnplaceable(_))
        ));
    }

    #[test]
    fn blank_image_has_no_pegs() {
        let img = GrayImage::filled(1000, 667, 90);
        let err = extract(&img, &IlluminationProfile::transmitted()).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::SelectPegs));
        assert_eq!(err.kind(), "NoPegsFound");
        assert!(err.to_string().contains("NoPegsFound"));
    }

    proptest::proptest! {
        #[test]
        fn placed_roi_lies_inside_the_image(
            mx in 200.0..2584.0f64, my in 200.0..1656.0f64,
            angle in -0.3..0.3f64, sep in 480.0..720.0f64, r in 35.0..65.0f64,
        ) {
            let (dx, dy) = (sep / 2.0 * angle.cos(), sep / 2.0 * angle.sin());
            let pair = PegPair::from_hits(hit(mx - dx, my - dy, r, 1.0), hit(mx + dx, my + dy, r, 1.0));
            let res = native();
            let scale = infer_scale(&pair, &res);
            let spec = compute_roi(&pair, scale, &res, (2784, 1856)).unwrap();
            proptest::prop_assert_eq!(spec.side, (500.0 * scale).round() as u32);
            proptest::prop_assert!((spec.rotation - pair.axis_angle).abs() < 1e-12);
            for (x, y) in spec.corners() {
                proptest::prop_assert!((-0.5 - 1e-6..=2783.5 + 1e-6).contains(&x), "x {}", x);
                proptest::prop_assert!((-0.5 - 1e-6..=1855.5 + 1e-6).contains(&y), "y {}", y);
            }
        }

        #[test]
        fn pair_order_does_not_matter(
            ax in 0.0..2784.0f64, ay in 0.0..1856.0f64, bx in 0.0..2784.0f64, by in 0.0..1856.0f64,
        ) {
            let (a, b) = (hit(ax, ay, 50.0, 1.0), hit(bx, by, 50.0, 1.0));
            proptest::prop_assert_eq!(PegPair::from_hits(a, b), PegPair::from_hits(b, a));
        }
    }
}
