//! Circular Hough transform over Canny edges.
//!
//! The accumulator has one bin per pixel in `(cx, cy)` and one per radius in
//! `r_min..=r_max` stepped by `r_step`. Two voting modes:
//!
//! * full: every edge pixel votes for all centers on the rasterized circle of
//!   radius `r` around it (midpoint circle, one vote per distinct offset);
//! * gradient: every edge pixel votes for the two centers at distance `r`
//!   along `+gradient` and `-gradient`.
//!
//! Scores are votes divided by the number of points on the rasterized circle
//! of that radius, which is the vote count a perfect one-pixel ring earns in
//! full mode. Scores are therefore comparable across radii.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edge::{canny_float, canny_with_gradient, CannyParams, EdgeMap, GradientField};
use crate::error::{Error, Result};
use crate::image::{downscale_box, GrayImage};

/// Maximum reported score; quantization on thick rings can push raw scores past 1.
pub const SCORE_CAP: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoughParams {
    pub r_min: u32,
    pub r_max: u32,
    #[serde(default = "one")]
    pub r_step: u32,
    pub vote_threshold: f64,
    #[serde(default)]
    pub min_center_dist: f64,
    #[serde(default = "yes")]
    pub use_gradient: bool,
    /// Upper bound on returned hits; 0 means unbounded.
    #[serde(default)]
    pub max_hits: usize,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl HoughParams {
    pub fn new(r_min: u32, r_max: u32, vote_threshold: f64) -> Self {
        HoughParams {
            r_min,
            r_max,
            r_step: 1,
            vote_threshold,
            min_center_dist: 0.0,
            use_gradient: true,
            max_hits: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_min < 1 || self.r_min > self.r_max {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= r_min <= r_max, got {}..{}",
                self.r_min, self.r_max
            )));
        }
        if self.r_step < 1 {
            return Err(Error::InvalidParameter("r_step must be >= 1".into()));
        }
        if !(self.vote_threshold > 0.0 && self.vote_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "vote_threshold must be in (0, 1], got {}",
                self.vote_threshold
            )));
        }
        if !(self.min_center_dist >= 0.0) {
            return Err(Error::InvalidParameter(
                "min_center_dist must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<u32> {
        (self.r_min..=self.r_max)
            .step_by(self.r_step as usize)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleHit {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub score: f64,
}

/// Offsets of the midpoint-circle rasterization of radius `r`, deduplicated
/// and sorted. Symmetric under negation and the eight octant reflections.
pub fn circle_offsets(r: u32) -> Vec<(i32, i32)> {
    if r == 0 {
        return vec![(0, 0)];
    }
    let r = r as i32;
    let mut pts = Vec::with_capacity(8 * r as usize + 8);
    let (mut x, mut y, mut d) = (0i32, r, 1 - r);
    while x <= y {
        for (a, b) in [(x, y), (y, x)] {
            pts.extend_from_slice(&[(a, b), (-a, b), (a, -b), (-a, -b)]);
        }
        x += 1;
        if d < 0 {
            d += 2 * x + 1;
        } else {
            y -= 1;
            d += 2 * (x - y) + 1;
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Vote counts over `(r, cy, cx)`, radius-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accumulator {
    width: u32,
    height: u32,
    r_values: Vec<u32>,
    ideal: Vec<u32>,
    votes: Vec<u32>,
}

impl Accumulator {
    pub fn zeros(width: u32, height: u32, r_values: Vec<u32>) -> Self {
        let ideal = r_values
            .iter()
            .map(|&r| circle_offsets(r).len() as u32)
            .collect();
        let n = width as usize * height as usize * r_values.len();
        Accumulator {
            width,
            height,
            r_values,
            ideal,
            votes: vec![0; n],
        }
    }

    /// `(n_cx, n_cy, n_r)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.width as usize,
            self.height as usize,
            self.r_values.len(),
        )
    }

    pub fn r_values(&self) -> &[u32] {
        &self.r_values
    }

    pub fn votes(&self) -> &[u32] {
        &self.votes
    }

    #[inline]
    pub fn get(&self, cx: u32, cy: u32, ri: usize) -> u32 {
        self.votes[self.index(cx, cy, ri)]
    }

    #[inline]
    fn index(&self, cx: u32, cy: u32, ri: usize) -> usize {
        (ri * self.height as usize + cy as usize) * self.width as usize + cx as usize
    }

    pub fn total_votes(&self) -> u64 {
        self.votes.iter().map(|&v| v as u64).sum()
    }

    /// Votes a perfect rasterized ring of the `ri`-th radius would earn.
    pub fn ideal_votes(&self, ri: usize) -> u32 {
        self.ideal[ri]
    }

    #[inline]
    pub fn score(&self, cx: u32, cy: u32, ri: usize) -> f64 {
        self.get(cx, cy, ri) as f64 / self.ideal[ri] as f64
    }
}

fn check_dims(edges: &EdgeMap, grad: Option<&GradientField>) -> Result<()> {
    if let Some(g) = grad {
        if (g.width, g.height) != edges.dims() {
            return Err(Error::DimensionMismatch(format!(
                "edge map {}x{} vs gradient field {}x{}",
                edges.width(),
                edges.height(),
                g.width,
                g.height
            )));
        }
    }
    Ok(())
}

/// Accumulate one radius slice. `points` carries edge coordinates and, in
/// gradient mode, the unit gradient direction.
fn vote_slice(
    slice: &mut [u32],
    w: i64,
    h: i64,
    r: u32,
    points: &[(i64, i64, f64, f64)],
    gradient: bool,
) {
    if gradient {
        let rf = r as f64;
        for &(x, y, ux, uy) in points {
            for s in [1.0, -1.0] {
                let cx = (x as f64 + s * rf * ux).round() as i64;
                let cy = (y as f64 + s * rf * uy).round() as i64;
                if cx >= 0 && cy >= 0 && cx < w && cy < h {
                    slice[(cy * w + cx) as usize] += 1;
                }
            }
        }
    } else {
        let offsets = circle_offsets(r);
        for &(x, y, _, _) in points {
            for &(dx, dy) in &offsets {
                let (cx, cy) = (x + dx as i64, y + dy as i64);
                if cx >= 0 && cy >= 0 && cx < w && cy < h {
                    slice[(cy * w + cx) as usize] += 1;
                }
            }
        }
    }
}

fn voters(edges: &EdgeMap, grad: &GradientField, gradient: bool) -> Vec<(i64, i64, f64, f64)> {
    edges
        .points()
        .filter_map(|(x, y)| {
            if !gradient {
                return Some((x as i64, y as i64, 0.0, 0.0));
            }
            let i = grad.index(x, y);
            let m = grad.magnitude[i] as f64;
            (m > 0.0).then(|| {
                (
                    x as i64,
                    y as i64,
                    grad.gx[i] as f64 / m,
                    grad.gy[i] as f64 / m,
                )
            })
        })
        .collect()
}

/// Sequential accumulation.
pub fn accumulate(
    edges: &EdgeMap,
    grad: &GradientField,
    params: &HoughParams,
) -> Result<Accumulator> {
    params.validate()?;
    check_dims(edges, Some(grad))?;
    let mut acc = Accumulator::zeros(edges.width(), edges.height(), params.radii());
    let pts = voters(edges, grad, params.use_gradient);
    let (w, h) = (edges.width() as i64, edges.height() as i64);
    let plane = (w * h) as usize;
    for (slice, &r) in acc.votes.chunks_mut(plane).zip(&acc.r_values) {
        vote_slice(slice, w, h, r, &pts, params.use_gradient);
    }
    Ok(acc)
}

/// Full-mode accumulation without a gradient field.
pub fn accumulate_full(edges: &EdgeMap, params: &HoughParams) -> Result<Accumulator> {
    params.validate()?;
    let mut acc = Accumulator::zeros(edges.width(), edges.height(), params.radii());
    let pts: Vec<_> = edges
        .points()
        .map(|(x, y)| (x as i64, y as i64, 0.0, 0.0))
        .collect();
    let (w, h) = (edges.width() as i64, edges.height() as i64);
    let plane = (w * h) as usize;
    for (slice, &r) in acc.votes.chunks_mut(plane).zip(&acc.r_values) {
        vote_slice(slice, w, h, r, &pts, false);
    }
    Ok(acc)
}

/// Same result as [`accumulate`]; radius slices are filled on the rayon pool.
pub fn accumulate_par(
    edges: &EdgeMap,
    grad: &GradientField,
    params: &HoughParams,
) -> Result<Accumulator> {
    params.validate()?;
    check_dims(edges, Some(grad))?;
    let mut acc = Accumulator::zeros(edges.width(), edges.height(), params.radii());
    let pts = voters(edges, grad, params.use_gradient);
    let (w, h) = (edges.width() as i64, edges.height() as i64);
    let plane = (w * h) as usize;
    let radii = acc.r_values.clone();
    acc.votes
        .par_chunks_mut(plane)
        .zip(radii.par_iter())
        .for_each(|(slice, &r)| vote_slice(slice, w, h, r, &pts, params.use_gradient));
    Ok(acc)
}

/// Total order used for ranking hits: score descending, then radius, row, column ascending.
fn rank(a: &CircleHit, b: &CircleHit) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.r.total_cmp(&b.r))
        .then(a.cy.total_cmp(&b.cy))
        .then(a.cx.total_cmp(&b.cx))
}

fn suppress(mut hits: Vec<CircleHit>, min_dist: f64, max_hits: usize) -> Vec<CircleHit> {
    hits.sort_by(rank);
    let mut kept: Vec<CircleHit> = Vec::new();
    for h in hits {
        if kept
            .iter()
            .any(|k| (k.cx - h.cx).hypot(k.cy - h.cy) < min_dist)
        {
            continue;
        }
        kept.push(h);
        if max_hits > 0 && kept.len() == max_hits {
            break;
        }
    }
    kept
}

/// Bins at or above `vote_threshold` that are maximal in their 3x3x3
/// neighborhood, greedily thinned by `min_center_dist`.
pub fn find_peaks(acc: &Accumulator, params: &HoughParams) -> Vec<CircleHit> {
    let (w, h, nr) = acc.dims();
    let min_votes: Vec<u32> = (0..nr)
        .map(|ri| ((params.vote_threshold * acc.ideal[ri] as f64).ceil() as u32).max(1))
        .collect();
    let mut candidates = Vec::new();
    for (ri, &min) in min_votes.iter().enumerate() {
        let plane = &acc.votes[ri * w * h..(ri + 1) * w * h];
        for (i, &v) in plane.iter().enumerate() {
            if v < min {
                continue;
            }
            let (cx, cy) = ((i % w) as u32, (i / w) as u32);
            let s = acc.score(cx, cy, ri);
            if s < params.vote_threshold {
                continue;
            }
            let mut is_max = true;
            'n: for rj in ri.saturating_sub(1)..=(ri + 1).min(nr - 1) {
                for ny in cy.saturating_sub(1)..=(cy + 1).min(h as u32 - 1) {
                    for nx in cx.saturating_sub(1)..=(cx + 1).min(w as u32 - 1) {
                        if acc.score(nx, ny, rj) > s {
                            is_max = false;
                            break 'n;
                        }
                    }
                }
            }
            if is_max {
                candidates.push(CircleHit {
                    cx: cx as f64,
                    cy: cy as f64,
                    r: acc.r_values[ri] as f64,
                    score: s.min(SCORE_CAP),
                });
            }
        }
    }
    suppress(candidates, params.min_center_dist, params.max_hits)
}

/// Canny, accumulate, find peaks. Hits come back sorted by score descending.
pub fn detect_circles(
    img: &GrayImage,
    canny: &CannyParams,
    hough: &HoughParams,
) -> Result<Vec<CircleHit>> {
    hough.validate()?;
    let (edges, grad) = canny_with_gradient(img, canny)?;
    let acc = accumulate(&edges, &grad, hough)?;
    Ok(find_peaks(&acc, hough))
}

/// Search window for the native-resolution refinement pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineWindow {
    /// Center search half-width in pixels.
    pub center: u32,
    /// Radius search half-width in pixels.
    pub radius: u32,
}

impl Default for RefineWindow {
    fn default() -> Self {
        RefineWindow {
            center: 8,
            radius: 4,
        }
    }
}

/// Re-detects a circle near `guess` with a full-vote pass on a local crop of
/// the (already exposure-normalized) native image, then fits center and
/// radius to the supporting edge pixels. A fitted hit is rescored by
/// [`arc_coverage`] if that beats its vote score. Returns `None` when the
/// window holds no votes.
pub fn refine_hit(
    norm: &GrayImage,
    guess: &CircleHit,
    canny: &CannyParams,
    window: RefineWindow,
) -> Result<Option<CircleHit>> {
    let (w, h) = (norm.width() as i64, norm.height() as i64);
    let c0x = guess.cx.round() as i64;
    let c0y = guess.cy.round() as i64;
    let r_lo = ((guess.r.round() as i64) - window.radius as i64).max(1);
    let r_hi = (guess.r.round() as i64) + window.radius as i64;
    let cw = window.center as i64;
    let margin = (3.0 * canny.sigma).ceil() as i64 + 3;
    let reach = r_hi + cw + margin;
    let x0 = (c0x - reach).max(0);
    let y0 = (c0y - reach).max(0);
    let x1 = (c0x + reach).min(w - 1);
    let y1 = (c0y + reach).min(h - 1);
    if x1 - x0 < 3 || y1 - y0 < 3 {
        return Ok(None);
    }
    let crop = norm.crop(
        x0 as u32,
        y0 as u32,
        (x1 - x0 + 1) as u32,
        (y1 - y0 + 1) as u32,
    )?;
    let (edges, _) = canny_float(&crop.to_float(), canny)?;
    let pts: Vec<(i64, i64)> = edges
        .points()
        .map(|(x, y)| (x as i64 + x0, y as i64 + y0))
        .collect();

    let side = (2 * cw + 1) as usize;
    let radii: Vec<i64> = (r_lo..=r_hi).collect();
    let mut best: Option<(CircleHit, u32)> = None;
    for &r in &radii {
        let offsets = circle_offsets(r as u32);
        let mut votes = vec![0u32; side * side];
        for &(px, py) in &pts {
            for &(dx, dy) in &offsets {
                let (cx, cy) = (px + dx as i64 - (c0x - cw), py + dy as i64 - (c0y - cw));
                if cx >= 0 && cy >= 0 && cx < side as i64 && cy < side as i64 {
                    votes[cy as usize * side + cx as usize] += 1;
                }
            }
        }
        let ideal = offsets.len() as f64;
        for (i, &v) in votes.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let hit = CircleHit {
                cx: (c0x - cw + (i % side) as i64) as f64,
                cy: (c0y - cw + (i / side) as i64) as f64,
                r: r as f64,
                score: v as f64 / ideal,
            };
            let better = match &best {
                None => true,
                Some((b, _)) => rank(&hit, b) == std::cmp::Ordering::Less,
            };
            if better {
                best = Some((hit, v));
            }
        }
    }
    let Some((mut hit, _)) = best else {
        return Ok(None);
    };

    let support: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(x, y)| (x as f64, y as f64))
        .filter(|&(x, y)| ((x - hit.cx).hypot(y - hit.cy) - hit.r).abs() <= 1.5)
        .collect();
    if support.len() >= 12 {
        if let Some((fx, fy, fr)) = fit_circle(&support) {
            if (fx - hit.cx).hypot(fy - hit.cy) <= 1.5 && (fr - hit.r).abs() <= 1.5 {
                hit.cx = fx;
                hit.cy = fy;
                hit.r = fr;
                // rescore against the sub-pixel circle: integer-center voting
                // splits a ring whose true center sits between pixels
                hit.score = hit.score.max(arc_coverage(&support, fx, fy, fr));
            }
        }
    }
    hit.score = hit.score.min(SCORE_CAP);
    Ok(Some(hit))
}

/// Fraction of the circle's circumference, in sectors of about 1.5 px of
/// arc, holding at least one of `points` within 1 px of the circle.
pub fn arc_coverage(points: &[(f64, f64)], cx: f64, cy: f64, r: f64) -> f64 {
    let bins = ((std::f64::consts::TAU * r / 1.5).ceil() as usize).max(4);
    let mut hit = vec![false; bins];
    for &(x, y) in points {
        let (dx, dy) = (x - cx, y - cy);
        if (dx.hypot(dy) - r).abs() <= 1.0 {
            let a = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
            hit[((a / std::f64::consts::TAU * bins as f64) as usize).min(bins - 1)] = true;
        }
    }
    hit.iter().filter(|&&b| b).count() as f64 / bins as f64
}

/// Algebraic least-squares circle fit (Kasa). Returns `(cx, cy, r)`.
pub fn fit_circle(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    // Solve [Suu Suv; Suv Svv] [a b]^T = 0.5 [Suuu + Suvv; Svvv + Suuv] in centered coordinates.
    let (mut suu, mut svv, mut suv, mut suuu, mut svvv, mut suvv, mut svuu) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        suu += u * u;
        svv += v * v;
        suv += u * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let det = suu * svv - suv * suv;
    if det.abs() < 1e-9 {
        return None;
    }
    let b1 = 0.5 * (suuu + suvv);
    let b2 = 0.5 * (svvv + svuu);
    let a = (b1 * svv - b2 * suv) / det;
    let b = (suu * b2 - suv * b1) / det;
    let r = (a * a + b * b + (suu + svv) / n).sqrt();
    Some((a + mx, b + my, r))
}

/// Coarse-to-fine detection on an exposure-normalized image: gradient voting
/// on a `factor`-times box-downscaled copy, then [`refine_hit`] at native
/// resolution for every coarse hit. `hough` radii and distances are in native
/// pixels. `parallel` spreads voting and refinement over the rayon pool
/// without changing the result.
pub fn detect_circles_multiscale(
    norm: &GrayImage,
    canny: &CannyParams,
    hough: &HoughParams,
    factor: u32,
    window: RefineWindow,
    parallel: bool,
) -> Result<Vec<CircleHit>> {
    hough.validate()?;
    canny.validate()?;
    let factor = factor.max(1);
    let coarse = downscale_box(norm, factor)?;
    let f = factor as f64;
    let coarse_params = HoughParams {
        r_min: ((hough.r_min as f64 / f).floor() as u32).max(1),
        r_max: ((hough.r_max as f64 / f).ceil() as u32).max(1),
        r_step: 1,
        min_center_dist: hough.min_center_dist / f,
        ..*hough
    };
    let (edges, grad) = canny_float(&coarse.to_float(), canny)?;
    let acc = if parallel {
        accumulate_par(&edges, &grad, &coarse_params)?
    } else {
        accumulate(&edges, &grad, &coarse_params)?
    };
    let coarse_hits = find_peaks(&acc, &coarse_params);

    let refine = |c: &CircleHit| {
        let guess = CircleHit {
            cx: c.cx * f + (f - 1.0) / 2.0,
            cy: c.cy * f + (f - 1.0) / 2.0,
            r: c.r * f,
            score: c.score,
        };
        refine_hit(norm, &guess, canny, window)
    };
    let refined: Vec<Option<CircleHit>> = if parallel {
        coarse_hits.par_iter().map(refine).collect::<Result<_>>()?
    } else {
        coarse_hits.iter().map(refine).collect::<Result<_>>()?
    };
    let refined = refined
        .into_iter()
        .flatten()
        .filter(|h| h.r >= hough.r_min as f64 - 0.5 && h.r <= hough.r_max as f64 + 0.5)
        .collect();
    Ok(suppress(refined, hough.min_center_dist, hough.max_hits))
}
