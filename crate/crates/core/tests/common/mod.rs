//! Independent reference implementations. Deliberately naive: no padding
//! tricks, no incremental algorithms, no shared code with the library.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use veinroi::{EdgeMap, FloatImage};

/// Circle raster from the closed-form midpoint rule: in the first octant,
/// column x takes the largest y whose lower midpoint (x, y - 1/2) lies
/// strictly inside the circle; the octant ends once x passes y.
pub fn circle_offsets_oracle(r: u32) -> BTreeSet<(i32, i32)> {
    let mut set = BTreeSet::new();
    if r == 0 {
        set.insert((0, 0));
        return set;
    }
    let rf = r as f64;
    for x in 0..=r as i32 {
        let xf = x as f64;
        let mut y = r as i32;
        while y >= x && xf * xf + (y as f64 - 0.5).powi(2) >= rf * rf {
            y -= 1;
        }
        if x > y {
            break;
        }
        for (a, b) in [(x, y), (y, x)] {
            for (sa, sb) in [(1, 1), (-1, 1), (1, -1), (-1, -1)] {
                set.insert((sa * a, sb * b));
            }
        }
    }
    set
}

/// Triple loop over (r, cy, cx): the bin counts edge pixels at `c - offset`.
/// Layout matches the production accumulator (radius-major, then row, column).
pub fn hough_bruteforce(edges: &EdgeMap, radii: &[u32]) -> Vec<u32> {
    let (w, h) = (edges.width() as i32, edges.height() as i32);
    let mut out = Vec::with_capacity((w * h) as usize * radii.len());
    for &r in radii {
        let offs: Vec<_> = circle_offsets_oracle(r).into_iter().collect();
        for cy in 0..h {
            for cx in 0..w {
                let mut n = 0;
                for &(dx, dy) in &offs {
                    let (x, y) = (cx - dx, cy - dy);
                    if x >= 0 && y >= 0 && x < w && y < h && edges.get(x as u32, y as u32) {
                        n += 1;
                    }
                }
                out.push(n);
            }
        }
    }
    out
}

/// Random edge map mixing scattered pixels with a few rasterized rings.
pub fn random_edge_map(rng: &mut ChaCha8Rng) -> EdgeMap {
    let w = rng.random_range(16..=64);
    let h = rng.random_range(16..=64);
    let density = rng.random_range(0.01..0.08);
    let mut e = EdgeMap::from_fn(w, h, |_, _| rng.random_bool(density));
    for _ in 0..rng.random_range(0..4) {
        let (cx, cy) = (rng.random_range(0..w as i32), rng.random_range(0..h as i32));
        let r = rng.random_range(3..=12);
        for (dx, dy) in circle_offsets_oracle(r) {
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && y >= 0 && x < w as i32 && y < h as i32 {
                e.set(x as u32, y as u32, true);
            }
        }
    }
    e
}

/// Sobel by direct 3x3 correlation with clamped coordinates, in f64.
pub fn sobel_oracle(img: &FloatImage) -> (Vec<f64>, Vec<f64>) {
    const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut gx = Vec::new();
    let mut gy = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let (mut sx, mut sy) = (0.0, 0.0);
            for j in 0..3 {
                for i in 0..3 {
                    let px = (x + i - 1).clamp(0, w - 1) as u32;
                    let py = (y + j - 1).clamp(0, h - 1) as u32;
                    let v = img.get(px, py) as f64;
                    sx += KX[j as usize][i as usize] * v;
                    sy += KY[j as usize][i as usize] * v;
                }
            }
            gx.push(sx);
            gy.push(sy);
        }
    }
    (gx, gy)
}

/// Dyadic samples k/256 keep every Sobel sum exact in f32.
pub fn random_dyadic_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> FloatImage {
    FloatImage::from_fn(w, h, |_, _| rng.random_range(0..256u32) as f32 / 256.0)
}

/// Hysteresis as a fixpoint: start from the strong set and keep adding weak
/// pixels with an accepted 8-neighbor until nothing changes.
pub fn hysteresis_oracle(v: &FloatImage, low: f32, high: f32) -> Vec<bool> {
    let (w, h) = (v.width() as i64, v.height() as i64);
    let mut acc: Vec<bool> = v.data().iter().map(|&m| m >= high).collect();
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if acc[i] || v.data()[i] < low {
                    continue;
                }
                let linked = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        (dx, dy) != (0, 0)
                            && nx >= 0
                            && ny >= 0
                            && nx < w
                            && ny < h
                            && acc[(ny * w + nx) as usize]
                    })
                });
                if linked {
                    acc[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return acc;
        }
    }
}

/// A sparse, thinned-looking magnitude field: mostly zero, with random
/// one-pixel-wide curves of random strength.
pub fn random_thinned_field(rng: &mut ChaCha8Rng, w: u32, h: u32) -> FloatImage {
    let mut data = vec![0f32; (w * h) as usize];
    for _ in 0..rng.random_range(5..25) {
        let (mut x, mut y) = (rng.random_range(0..w as i64), rng.random_range(0..h as i64));
        for _ in 0..rng.random_range(3..40) {
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                break;
            }
            data[(y * w as i64 + x) as usize] = rng.random_range(0.0..1.0);
            x += rng.random_range(-1..=1);
            y += rng.random_range(-1..=1);
        }
    }
    for v in data.iter_mut() {
        if *v == 0.0 && rng.random_bool(0.02) {
            *v = rng.random_range(0.0..1.0);
        }
    }
    FloatImage::from_raw(w, h, data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random smooth-ish 8-bit image: a few blobs and steps plus noise.
pub fn random_scene(rng: &mut ChaCha8Rng, w: u32, h: u32) -> veinroi::GrayImage {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(2..6))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(4.0..20.0),
                rng.random_range(-120.0..120.0),
            )
        })
        .collect();
    let base = rng.random_range(60.0..180.0);
    veinroi::GrayImage::from_fn(w, h, |x, y| {
        let mut v = base;
        for &(bx, by, r, a) in &blobs {
            let d = ((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)).sqrt();
            if d < r {
                v += a;
            }
        }
        (v + rng.random_range(-6.0..6.0)).clamp(0.0, 255.0) as u8
    })
}
