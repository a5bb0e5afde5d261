//! Canny edge detection: Sobel gradients, non-maximum suppression along four
//! quantized directions, and two-threshold hysteresis linking.

use std::f32::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{gaussian_blur, normalize_exposure, FloatImage, GrayImage};

/// Per-pixel Sobel response.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: u32,
    pub height: u32,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    pub magnitude: Vec<f32>,
    /// `atan2(gy, gx)` in `(-pi, pi]`; `y` grows downward.
    pub orientation: Vec<f32>,
}

impl GradientField {
    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeMap {
    width: u32,
    height: u32,
    edges: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: u32, height: u32) -> Self {
        EdgeMap {
            width,
            height,
            edges: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = EdgeMap::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.edges[y as usize * width as usize + x as usize] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.edges[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.edges[y as usize * w + x as usize] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.edges
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// Edge pixel coordinates in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Debug dump: edges at 255, background at 0.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw(
            self.width,
            self.height,
            self.edges
                .iter()
                .map(|&e| if e { 255 } else { 0 })
                .collect(),
        )
        .expect("edge map dimensions are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CannyParams {
    pub sigma: f64,
    pub low_threshold: f32,
    pub high_threshold: f32,
    /// Percentile anchors for the exposure normalization that precedes smoothing.
    #[serde(default = "default_norm_low")]
    pub norm_low_pct: f64,
    #[serde(default = "default_norm_high")]
    pub norm_high_pct: f64,
}

fn default_norm_low() -> f64 {
    0.001
}

fn default_norm_high() -> f64 {
    0.999
}

impl CannyParams {
    pub fn new(sigma: f64, low_threshold: f32, high_threshold: f32) -> Self {
        CannyParams {
            sigma,
            low_threshold,
            high_threshold,
            norm_low_pct: default_norm_low(),
            norm_high_pct: default_norm_high(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "canny sigma must be > 0, got {}",
                self.sigma
            )));
        }
        check_thresholds(self.low_threshold, self.high_threshold)?;
        if !(0.0..=1.0).contains(&self.norm_low_pct)
            || !(0.0..=1.0).contains(&self.norm_high_pct)
            || self.norm_low_pct >= self.norm_high_pct
        {
            return Err(Error::InvalidParameter(
                "normalization percentiles out of order".into(),
            ));
        }
        Ok(())
    }
}

fn check_thresholds(low: f32, high: f32) -> Result<()> {
    if !(low > 0.0 && low < high) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < low < high, got low={low} high={high}"
        )));
    }
    Ok(())
}

/// 3x3 Sobel correlation with edge-clamp borders.
pub fn sobel_gradients(img: &FloatImage) -> Result<GradientField> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let (w, h) = (w as usize, h as usize);
    let pw = w + 2;
    let mut padded = vec![0f32; pw * (h + 2)];
    for py in 0..h + 2 {
        let sy = py.saturating_sub(1).min(h - 1);
        let src = &img.data()[sy * w..(sy + 1) * w];
        let row = &mut padded[py * pw..(py + 1) * pw];
        row[0] = src[0];
        row[1..=w].copy_from_slice(src);
        row[w + 1] = src[w - 1];
    }

    let n = w * h;
    let mut gx = vec![0f32; n];
    let mut gy = vec![0f32; n];
    let mut magnitude = vec![0f32; n];
    let mut orientation = vec![0f32; n];
    for y in 0..h {
        let r0 = &padded[y * pw..(y + 1) * pw];
        let r1 = &padded[(y + 1) * pw..(y + 2) * pw];
        let r2 = &padded[(y + 2) * pw..(y + 3) * pw];
        for x in 0..w {
            let i = y * w + x;
            let dx = (r0[x + 2] - r0[x]) + 2.0 * (r1[x + 2] - r1[x]) + (r2[x + 2] - r2[x]);
            let dy = (r2[x] - r0[x]) + 2.0 * (r2[x + 1] - r0[x + 1]) + (r2[x + 2] - r0[x + 2]);
            gx[i] = dx;
            gy[i] = dy;
            magnitude[i] = dx.hypot(dy);
            let mut a = dy.atan2(dx);
            if a <= -PI {
                a += 2.0 * PI;
            }
            orientation[i] = a;
        }
    }
    Ok(GradientField {
        width: w as u32,
        height: h as u32,
        gx,
        gy,
        magnitude,
        orientation,
    })
}

/// Step along the gradient direction quantized to 0, 45, 90 or 135 degrees.
#[inline]
fn direction_step(theta: f32) -> (i64, i64) {
    let mut a = theta.rem_euclid(PI);
    if a >= PI {
        a = 0.0;
    }
    let eighth = PI / 8.0;
    if !(eighth..7.0 * eighth).contains(&a) {
        (1, 0)
    } else if a < 3.0 * eighth {
        (1, 1)
    } else if a < 5.0 * eighth {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Keeps a pixel's magnitude where it is strictly greater than its forward
/// neighbor and no smaller than its backward neighbor along the quantized
/// gradient direction. Neighbors outside the image count as zero.
pub fn non_max_suppression(grad: &GradientField) -> FloatImage {
    let (w, h) = (grad.width as i64, grad.height as i64);
    let mag = &grad.magnitude;
    let at = |x: i64, y: i64| -> f32 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            mag[(y * w + x) as usize]
        }
    };
    let mut out = FloatImage::new(grad.width, grad.height);
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = direction_step(grad.orientation[i]);
            if m > at(x + dx, y + dy) && m >= at(x - dx, y - dy) {
                dst[i] = m;
            }
        }
    }
    out
}

/// Pixels at or above `high` seed edges; pixels at or above `low` join when
/// 8-connected to a seed through other accepted pixels.
pub fn hysteresis(thinned: &FloatImage, low: f32, high: f32) -> Result<EdgeMap> {
    check_thresholds(low, high)?;
    let (w, h) = (thinned.width() as i64, thinned.height() as i64);
    let v = thinned.data();
    let mut edges = EdgeMap::new(thinned.width(), thinned.height());
    let mut stack = Vec::new();
    for (i, &m) in v.iter().enumerate() {
        if m < high || edges.edges[i] {
            continue;
        }
        edges.edges[i] = true;
        stack.push(i);
        while let Some(j) = stack.pop() {
            let (x, y) = (j as i64 % w, j as i64 / w);
            for ny in (y - 1).max(0)..=(y + 1).min(h - 1) {
                for nx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                    let k = (ny * w + nx) as usize;
                    if !edges.edges[k] && v[k] >= low {
                        edges.edges[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
    }
    Ok(edges)
}

/// Blur, gradient, thinning and linking on an already-normalized float image.
pub fn canny_float(img: &FloatImage, params: &CannyParams) -> Result<(EdgeMap, GradientField)> {
    params.validate()?;
    let blurred = gaussian_blur(img, params.sigma)?;
    let grad = sobel_gradients(&blurred)?;
    let thinned = non_max_suppression(&grad);
    let edges = hysteresis(&thinned, params.low_threshold, params.high_threshold)?;
    Ok((edges, grad))
}

/// Full detector: exposure normalization, then [`canny_float`]. Also returns
/// the gradient field for gradient-directed Hough voting.
pub fn canny_with_gradient(
    img: &GrayImage,
    params: &CannyParams,
) -> Result<(EdgeMap, GradientField)> {
    params.validate()?;
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: 3,
        });
    }
    let norm = normalize_exposure(img, params.norm_low_pct, params.norm_high_pct)?;
    canny_float(&norm.to_float(), params)
}

pub fn canny(img: &GrayImage, params: &CannyParams) -> Result<EdgeMap> {
    canny_with_gradient(img, params).map(|(e, _)| e)
}
