//! Contrast preprocessing for extracted ROIs: global histogram equalization
//! and clip-limited tile-adaptive equalization with bilinear blending of the
//! four surrounding tile mappings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Smallest admissible tile edge for local equalization.
pub const MIN_TILE: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhanceMode {
    GlobalEq,
    LocalAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceParams {
    pub tile_grid: (u32, u32),
    /// Multiple of the uniform-histogram bin height; `inf` disables clipping.
    pub clip_limit: f64,
    pub mode: EnhanceMode,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        EnhanceParams {
            tile_grid: (8, 8),
            clip_limit: 2.0,
            mode: EnhanceMode::LocalAdaptive,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.tile_grid.0 < 1 || self.tile_grid.1 < 1 {
            return Err(Error::InvalidParameter(format!(
                "tile grid {:?} must be >= 1 each",
                self.tile_grid
            )));
        }
        if !(self.clip_limit >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "clip_limit must be >= 1, got {}",
                self.clip_limit
            )));
        }
        Ok(())
    }
}

pub fn enhance(img: &GrayImage, params: &EnhanceParams) -> Result<GrayImage> {
    params.validate()?;
    match params.mode {
        EnhanceMode::GlobalEq => Ok(global_hist_eq(img)),
        EnhanceMode::LocalAdaptive => local_adaptive_eq(img, params),
    }
}

/// `lut[v] = floor(255 * cdf(v) / total)`; a histogram with a single occupied
/// level maps to the identity.
fn equalization_lut(hist: &[f64; 256], total: f64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    if hist.iter().filter(|&&c| c > 0.0).count() <= 1 {
        for (v, l) in lut.iter_mut().enumerate() {
            *l = v as u8;
        }
        return lut;
    }
    let mut cdf = 0.0;
    for (v, l) in lut.iter_mut().enumerate() {
        cdf += hist[v];
        *l = (255.0 * cdf / total).floor().clamp(0.0, 255.0) as u8;
    }
    lut
}

fn histogram_f64(img: &GrayImage, x0: u32, y0: u32, x1: u32, y1: u32) -> [f64; 256] {
    let mut h = [0f64; 256];
    let w = img.width() as usize;
    for y in y0..y1 {
        let row = &img.data()[y as usize * w + x0 as usize..y as usize * w + x1 as usize];
        for &v in row {
            h[v as usize] += 1.0;
        }
    }
    h
}

pub fn global_hist_eq(img: &GrayImage) -> GrayImage {
    let hist = histogram_f64(img, 0, 0, img.width(), img.height());
    let lut = equalization_lut(&hist, img.data().len() as f64);
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    GrayImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}

/// Clip at `limit`, spreading the excess evenly over all bins.
fn clip_histogram(hist: &mut [f64; 256], limit: f64) {
    if !limit.is_finite() {
        return;
    }
    let mut excess = 0.0;
    for c in hist.iter_mut() {
        if *c > limit {
            excess += *c - limit;
            *c = limit;
        }
    }
    if excess > 0.0 {
        let share = excess / 256.0;
        for c in hist.iter_mut() {
            *c += share;
        }
    }
}

fn tile_bounds(n: u32, tiles: u32) -> Vec<u32> {
    (0..=tiles)
        .map(|i| (i as u64 * n as u64 / tiles as u64) as u32)
        .collect()
}

/// Locates `p` between tile centers: returns `(lower tile, upper tile, weight of upper)`.
fn blend_axis(p: u32, centers: &[f64]) -> (usize, usize, f64) {
    let p = p as f64;
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= p) - 1;
    let a = (p - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, a)
}

pub fn local_adaptive_eq(img: &GrayImage, params: &EnhanceParams) -> Result<GrayImage> {
    params.validate()?;
    let (nx, ny) = params.tile_grid;
    let (w, h) = img.dims();
    if w / nx < MIN_TILE || h / ny < MIN_TILE {
        return Err(Error::InvalidParameter(format!(
            "{nx}x{ny} tiles on {w}x{h} are smaller than {MIN_TILE}x{MIN_TILE}"
        )));
    }
    let first = img.data()[0];
    if img.data().iter().all(|&v| v == first) {
        return Ok(img.clone());
    }

    let xb = tile_bounds(w, nx);
    let yb = tile_bounds(h, ny);
    let mut luts = Vec::with_capacity((nx * ny) as usize);
    for ty in 0..ny as usize {
        for tx in 0..nx as usize {
            let mut hist = histogram_f64(img, xb[tx], yb[ty], xb[tx + 1], yb[ty + 1]);
            let n = ((xb[tx + 1] - xb[tx]) * (yb[ty + 1] - yb[ty])) as f64;
            clip_histogram(&mut hist, params.clip_limit * n / 256.0);
            luts.push(equalization_lut(&hist, n));
        }
    }
    let centers = |b: &[u32]| -> Vec<f64> {
        b.windows(2)
            .map(|p| (p[0] + p[1] - 1) as f64 / 2.0)
            .collect()
    };
    let (cx, cy) = (centers(&xb), centers(&yb));
    let xs: Vec<(usize, usize, f64)> = (0..w).map(|x| blend_axis(x, &cx)).collect();

    let mut out = Vec::with_capacity(img.data().len());
    for y in 0..h {
        let (t0, t1, b) = blend_axis(y, &cy);
        for (x, &(s0, s1, a)) in xs.iter().enumerate() {
            let v = img.get(x as u32, y) as usize;
            let l = |tx: usize, ty: usize| luts[ty * nx as usize + tx][v] as f64;
            let top = (1.0 - a) * l(s0, t0) + a * l(s1, t0);
            let bottom = (1.0 - a) * l(s0, t1) + a * l(s1, t1);
            let val = (1.0 - b) * top + b * bottom;
            out.push(val.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::from_raw(w, h, out)
}
