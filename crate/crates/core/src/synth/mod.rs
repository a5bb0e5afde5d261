//! Deterministic synthetic NIR hand scenes with ground truth.
//!
//! Geometry is authored in reference pixels (the 2784-wide raster) and
//! mapped to the output raster by `k = width / 2784`. A scene is: dark
//! background, bright (transmitted) or mid-gray (reflected) hand silhouette
//! built from capsules, dark vein strokes, two filled peg discs, Gaussian
//! noise, then exposure gain with clamping.

mod corpus;
mod vein;

pub use corpus::{
    draw_corpus_specs, make_corpus, make_database_mimic, CorpusManifest, CorpusOptions,
    CorpusRecord, IlluminationChoice, MimicManifest, MimicOptions, MimicRecord, Variations,
    MIMIC_IMAGES, MIMIC_SUBJECTS,
};
pub use vein::{catmull_rom, generate_vein_tree, VeinPolyline};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::profile::{Illumination, REFERENCE_DIMS};

/// Peg radius at plate-height factor 1, reference pixels.
pub const REFERENCE_PEG_RADIUS: f64 = 50.0;
/// Peg centers relative to the raster center, reference pixels.
pub const REFERENCE_PEG_OFFSETS: [(f64, f64); 2] = [(-300.0, 400.0), (300.0, 400.0)];
/// Hand center relative to the raster center, reference pixels.
pub const REFERENCE_HAND_OFFSET: (f64, f64) = (0.0, -140.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PegPolarity {
    #[default]
    Dark,
    Bright,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    /// Output pixels, before the whole-scene rotation.
    pub center: (f64, f64),
    /// Radians.
    pub orientation: f64,
    /// Plate-height factor; 1 is the reference distance.
    pub scale: f64,
    /// Right hand (thumb on the other side).
    pub mirrored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub illumination: Illumination,
    /// Output pixels, before the whole-scene rotation.
    pub peg_centers: [(f64, f64); 2],
    /// Output pixels.
    pub peg_radius: f64,
    pub peg_polarity: PegPolarity,
    pub hand_pose: HandPose,
    /// Hand-local model units (reference pixels, hand center at origin).
    pub vein_tree: Vec<VeinPolyline>,
    pub exposure_gain: f64,
    /// Intensity units (1.0 = full scale).
    pub noise_sigma: f64,
    /// Radians, about the raster center.
    pub rotation: f64,
}

/// Per-scene perturbation of the reference layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePose {
    pub scale: f64,
    pub rotation: f64,
    /// Output pixels.
    pub translation: (f64, f64),
    /// Hand displacement relative to the pegs, reference pixels.
    pub hand_offset: (f64, f64),
    pub hand_angle: f64,
    pub mirrored: bool,
}

impl Default for ScenePose {
    fn default() -> Self {
        ScenePose {
            scale: 1.0,
            rotation: 0.0,
            translation: (0.0, 0.0),
            hand_offset: (0.0, 0.0),
            hand_angle: 0.0,
            mirrored: false,
        }
    }
}

impl SceneSpec {
    /// Reference layout at the given raster size.
    pub fn reference(seed: u64, illumination: Illumination, width: u32, height: u32) -> Self {
        Self::posed(seed, illumination, width, height, &ScenePose::default())
    }

    pub fn posed(
        seed: u64,
        illumination: Illumination,
        width: u32,
        height: u32,
        pose: &ScenePose,
    ) -> Self {
        let k = width as f64 / REFERENCE_DIMS.0 as f64;
        let ks = k * pose.scale;
        let o = center_of(width, height);
        let place = |(dx, dy): (f64, f64)| {
            (
                o.0 + ks * dx + pose.translation.0,
                o.1 + ks * dy + pose.translation.1,
            )
        };
        let hand = (
            REFERENCE_HAND_OFFSET.0 + pose.hand_offset.0,
            REFERENCE_HAND_OFFSET.1 + pose.hand_offset.1,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneSpec {
            seed,
            width,
            height,
            illumination,
            peg_centers: REFERENCE_PEG_OFFSETS.map(place),
            peg_radius: REFERENCE_PEG_RADIUS * ks,
            peg_polarity: PegPolarity::Dark,
            hand_pose: HandPose {
                center: place(hand),
                orientation: pose.hand_angle,
                scale: pose.scale,
                mirrored: pose.mirrored,
            },
            vein_tree: generate_vein_tree(&mut rng),
            exposure_gain: 1.0,
            noise_sigma: 0.0,
            rotation: pose.rotation,
        }
    }

    /// Output pixels per reference pixel.
    pub fn pixel_scale(&self) -> f64 {
        self.width as f64 / REFERENCE_DIMS.0 as f64
    }

    /// Peg diameter relative to the reference diameter at this raster size.
    pub fn true_scale(&self) -> f64 {
        self.peg_radius / (REFERENCE_PEG_RADIUS * self.pixel_scale())
    }

    /// Maps a pre-rotation point to output pixels.
    pub fn to_image(&self, p: (f64, f64)) -> (f64, f64) {
        rotate_about(p, center_of(self.width, self.height), self.rotation)
    }

    /// Maps a hand-local model point to output pixels.
    pub fn hand_to_image(&self, p: (f64, f64)) -> (f64, f64) {
        let hp = &self.hand_pose;
        let f = self.pixel_scale() * hp.scale;
        let x = if hp.mirrored { -p.0 } else { p.0 };
        let (s, c) = hp.orientation.sin_cos();
        let q = (
            hp.center.0 + f * (c * x - s * p.1),
            hp.center.1 + f * (s * x + c * p.1),
        );
        self.to_image(q)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.width < 16 || self.height < 16 {
            return bad(format!(
                "raster {}x{} is below 16x16",
                self.width, self.height
            ));
        }
        if !(self.exposure_gain > 0.0 && self.exposure_gain.is_finite()) {
            return bad(format!(
                "exposure_gain must be > 0, got {}",
                self.exposure_gain
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !(self.peg_radius > 0.0 && self.peg_radius.is_finite()) {
            return bad(format!("peg_radius must be > 0, got {}", self.peg_radius));
        }
        if !(self.hand_pose.scale > 0.0 && self.hand_pose.scale.is_finite())
            || !self.rotation.is_finite()
        {
            return bad("hand scale must be > 0 and rotation finite".into());
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let hc = self.to_image(self.hand_pose.center);
        for (i, &p) in self.peg_centers.iter().enumerate() {
            let (x, y) = self.to_image(p);
            let r = self.peg_radius;
            if !(x - r >= -0.5 && y - r >= -0.5 && x + r <= w - 0.5 && y + r <= h - 0.5) {
                return bad(format!(
                    "peg {i} at ({x:.1}, {y:.1}) r={r:.1} leaves the raster"
                ));
            }
            if (hc.0 - x).hypot(hc.1 - y) <= r {
                return bad(format!("peg {i} covers the hand center"));
            }
        }
        let (p, q) = (self.peg_centers[0], self.peg_centers[1]);
        if (p.0 - q.0).hypot(p.1 - q.1) <= 2.0 * self.peg_radius {
            return bad("peg discs overlap".into());
        }
        for (i, v) in self.vein_tree.iter().enumerate() {
            if v.points.len() < 2
                || v.widths.len() + 1 != v.points.len()
                || v.widths.iter().any(|&w| !(w > 0.0))
            {
                return bad(format!("vein {i} is malformed"));
            }
        }
        Ok(())
    }
}

/// What the renderer knows about the scene it drew. Masks are 0/255 rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Output pixels, after rotation.
    pub peg_centers: [(f64, f64); 2],
    pub peg_radius: f64,
    pub true_scale: f64,
    pub hand_center: (f64, f64),
    pub illumination: Illumination,
    /// Drawn (visible) vein pixels inside the hand.
    pub vein_mask: GrayImage,
    pub hand_mask: GrayImage,
}

/// The scalar part of [`GroundTruth`], for manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub peg_centers: [(f64, f64); 2],
    pub peg_radius: f64,
    pub true_scale: f64,
    pub hand_center: (f64, f64),
    pub illumination: Illumination,
}

impl GroundTruth {
    pub fn record(&self) -> TruthRecord {
        TruthRecord {
            peg_centers: self.peg_centers,
            peg_radius: self.peg_radius,
            true_scale: self.true_scale,
            hand_center: self.hand_center,
            illumination: self.illumination,
        }
    }
}

/// Intensity levels of one illumination look, before gain.
#[derive(Debug, Clone, Copy)]
struct Look {
    background: f64,
    hand: f64,
    /// Multiplicative vein darkening for shallow / deep veins; `None` = not drawn.
    shallow: f64,
    deep: Option<f64>,
}

fn look(ill: Illumination) -> Look {
    match ill {
        Illumination::Transmitted => Look {
            background: 0.30,
            hand: 0.82,
            shallow: 0.36,
            deep: Some(0.42),
        },
        Illumination::Reflected => Look {
            background: 0.28,
            hand: 0.58,
            shallow: 0.84,
            deep: None,
        },
    }
}

const PEG_DARK: f64 = 0.04;
const PEG_BRIGHT: f64 = 0.97;
const SHADING: f64 = 0.12;

/// Hand silhouette as capsules `(a, b, radius)` in hand-local units.
type Capsule = ((f64, f64), (f64, f64), f64);

const HAND_CAPSULES: [Capsule; 7] = [
    ((0.0, -60.0), (0.0, 60.0), 360.0),
    ((0.0, 200.0), (0.0, 2400.0), 190.0),
    ((-240.0, -300.0), (-250.0, -780.0), 42.0),
    ((-80.0, -300.0), (-85.0, -900.0), 42.0),
    ((80.0, -300.0), (85.0, -860.0), 42.0),
    ((240.0, -300.0), (255.0, -740.0), 40.0),
    ((-300.0, 60.0), (-560.0, -240.0), 55.0),
];

fn center_of(w: u32, h: u32) -> (f64, f64) {
    ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
}

fn rotate_about(p: (f64, f64), o: (f64, f64), a: f64) -> (f64, f64) {
    let (s, c) = a.sin_cos();
    let (dx, dy) = (p.0 - o.0, p.1 - o.1);
    (o.0 + c * dx - s * dy, o.1 + s * dx + c * dy)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (wx - t * vx).hypot(wy - t * vy)
}

/// Pixel-clipped bounding box of a disc-swept segment.
fn seg_bbox(
    a: (f64, f64),
    b: (f64, f64),
    pad: f64,
    w: u32,
    h: u32,
) -> Option<(u32, u32, u32, u32)> {
    let x0 = (a.0.min(b.0) - pad).floor().max(0.0);
    let y0 = (a.1.min(b.1) - pad).floor().max(0.0);
    let x1 = (a.0.max(b.0) + pad).ceil().min(w as f64 - 1.0);
    let y1 = (a.1.max(b.1) + pad).ceil().min(h as f64 - 1.0);
    (x0 <= x1 && y0 <= y1).then_some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

pub fn render_scene(spec: &SceneSpec) -> Result<(GrayImage, GroundTruth)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = w as usize * h as usize;
    let lk = look(spec.illumination);
    let f = spec.pixel_scale() * spec.hand_pose.scale;
    let hand_center = spec.hand_to_image((0.0, 0.0));

    // hand coverage from the capsule union's signed distance
    let capsules: Vec<_> = HAND_CAPSULES
        .iter()
        .map(|&(a, b, r)| (spec.hand_to_image(a), spec.hand_to_image(b), r * f))
        .collect();
    let mut hand = vec![0.0f64; n];
    for (a, b, r) in &capsules {
        let Some((x0, y0, x1, y1)) = seg_bbox(*a, *b, r + 1.0, w, h) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = segment_distance((x as f64, y as f64), *a, *b) - r;
                let cov = (0.5 - d).clamp(0.0, 1.0);
                let i = y as usize * w as usize + x as usize;
                if cov > hand[i] {
                    hand[i] = cov;
                }
            }
        }
    }

    // vein darkening: max over strokes of coverage * depth strength
    let mut dark = vec![0.0f64; n];
    let mut vein_cov = vec![0.0f64; n];
    for v in &spec.vein_tree {
        let ratio = if v.shallow { Some(lk.shallow) } else { lk.deep };
        let Some(ratio) = ratio else { continue };
        let strength = 1.0 - ratio;
        let pts: Vec<_> = v.points.iter().map(|&p| spec.hand_to_image(p)).collect();
        for (seg, &width) in pts.windows(2).zip(&v.widths) {
            let hw = width * f / 2.0;
            let Some((x0, y0, x1, y1)) = seg_bbox(seg[0], seg[1], hw + 1.0, w, h) else {
                continue;
            };
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = segment_distance((x as f64, y as f64), seg[0], seg[1]);
                    let cov = (hw + 0.5 - d).clamp(0.0, 1.0);
                    if cov == 0.0 {
                        continue;
                    }
                    let i = y as usize * w as usize + x as usize;
                    dark[i] = dark[i].max(cov * strength);
                    vein_cov[i] = vein_cov[i].max(cov);
                }
            }
        }
    }

    let pegs = spec.peg_centers.map(|p| spec.to_image(p));
    let peg_level = match spec.peg_polarity {
        PegPolarity::Dark => PEG_DARK,
        PegPolarity::Bright => PEG_BRIGHT,
    };
    let shade_r2 = (600.0 * f).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6e6f_6973_655f_7631);
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).unwrap());

    let mut out = vec![0u8; n];
    let mut vein_mask = vec![0u8; n];
    let mut hand_mask = vec![0u8; n];
    for y in 0..h {
        for x in 0..w {
            let i = y as usize * w as usize + x as usize;
            let (px, py) = (x as f64, y as f64);
            let d2 = (px - hand_center.0).powi(2) + (py - hand_center.1).powi(2);
            let shade = 1.0 - SHADING * (d2 / shade_r2).min(1.0);
            let skin = lk.hand * shade * (1.0 - dark[i]);
            let mut v = lk.background * (1.0 - hand[i]) + skin * hand[i];
            for c in &pegs {
                let d = (px - c.0).hypot(py - c.1);
                let cov = (spec.peg_radius + 0.5 - d).clamp(0.0, 1.0);
                if cov > 0.0 {
                    v = v * (1.0 - cov) + peg_level * cov;
                }
            }
            if let Some(nd) = &noise {
                v += nd.sample(&mut rng);
            }
            out[i] = ((v * spec.exposure_gain).clamp(0.0, 1.0) * 255.0).round() as u8;
            let in_hand = hand[i] >= 0.5;
            hand_mask[i] = if in_hand { 255 } else { 0 };
            vein_mask[i] = if in_hand && vein_cov[i] >= 0.5 {
                255
            } else {
                0
            };
        }
    }
    let img = GrayImage::from_raw(w, h, out)?;
    let truth = GroundTruth {
        peg_centers: pegs,
        peg_radius: spec.peg_radius,
        true_scale: spec.true_scale(),
        hand_center,
        illumination: spec.illumination,
        vein_mask: GrayImage::from_raw(w, h, vein_mask)?,
        hand_mask: GrayImage::from_raw(w, h, hand_mask)?,
    };
    Ok((img, truth))
}

/// Mean intensity on vein pixels over mean on the non-vein hand pixels
/// within `band` px of a vein. `None` when either set is empty.
#[allow(clippy::needless_range_loop)]
pub fn vein_contrast_ratio(
    img: &GrayImage,
    vein_mask: &GrayImage,
    hand_mask: &GrayImage,
    band: u32,
) -> Option<f64> {
    let (w, h) = img.dims();
    let near = dilate(vein_mask, band);
    let (mut sv, mut nv, mut sb, mut nb) = (0.0, 0u64, 0.0, 0u64);
    for i in 0..(w * h) as usize {
        if hand_mask.data()[i] == 0 {
            continue;
        }
        let p = img.data()[i] as f64;
        if vein_mask.data()[i] != 0 {
            sv += p;
            nv += 1;
        } else if near[i] {
            sb += p;
            nb += 1;
        }
    }
    (nv > 0 && nb > 0 && sb > 0.0).then(|| (sv / nv as f64) / (sb / nb as f64))
}

/// Square dilation of a nonzero mask.
fn dilate(mask: &GrayImage, r: u32) -> Vec<bool> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = r as usize;
    let mut rows = vec![false; w * h];
    for y in 0..h {
        let row = &mask.data()[y * w..(y + 1) * w];
        for x in 0..w {
            let (a, b) = (x.saturating_sub(r), (x + r).min(w - 1));
            rows[y * w + x] = row[a..=b].iter().any(|&v| v != 0);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let (a, b) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            out[y * w + x] = (a..=b).any(|yy| rows[yy * w + x]);
        }
    }
    out
}
