//! Random branching vein trees in hand-local model units (reference pixels,
//! origin at the hand center, +y toward the wrist).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// A smooth vein stroke. `widths[i]` is the width of segment `points[i]..points[i+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeinPolyline {
    pub points: Vec<(f64, f64)>,
    pub widths: Vec<f64>,
    /// Lies right under the skin; the only kind visible under reflected light.
    pub shallow: bool,
}

impl VeinPolyline {
    pub fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64), f64)> + '_ {
        self.points
            .windows(2)
            .zip(&self.widths)
            .map(|(w, &width)| (w[0], w[1], width))
    }
}

const STEP: f64 = 32.0;
const FINGER_BASES: [f64; 4] = [-240.0, -80.0, 80.0, 240.0];

/// Inside the dorsum-plus-wrist region veins are allowed to occupy.
fn in_vein_region(p: (f64, f64)) -> bool {
    let (x, y) = p;
    if y > 120.0 {
        x.abs() < 150.0 && y < 520.0
    } else {
        let dy = if y < -60.0 { y + 60.0 } else { 0.0 };
        (x * x + dy * dy).sqrt() < 330.0 && y > -400.0
    }
}

struct Walk {
    pos: (f64, f64),
    heading: f64,
    target: (f64, f64),
    width: f64,
    steps: usize,
    depth: u8,
}

pub fn generate_vein_tree<R: Rng>(rng: &mut R) -> Vec<VeinPolyline> {
    let turn = Normal::new(0.0, 0.22).unwrap();
    let n_trunks = rng.random_range(3..=5);
    let mut pending: Vec<Walk> = Vec::new();
    for t in 0..n_trunks {
        let frac = (t as f64 + 0.5) / n_trunks as f64;
        let x0 = -130.0 + 260.0 * frac + rng.random_range(-20.0..20.0);
        let tx = FINGER_BASES[(frac * 4.0) as usize % 4] + rng.random_range(-40.0..40.0);
        let start = (x0, 500.0);
        let target = (tx, -390.0);
        pending.push(Walk {
            pos: start,
            heading: (target.1 - start.1).atan2(target.0 - start.0),
            target,
            width: rng.random_range(20.0..26.0),
            steps: 40,
            depth: 0,
        });
    }

    let mut tree = Vec::new();
    let mut shallow_count = 0;
    while let Some(walk) = pending.pop() {
        let mut pts = vec![walk.pos];
        let mut pos = walk.pos;
        let mut heading = walk.heading;
        for _ in 0..walk.steps {
            let want = (walk.target.1 - pos.1).atan2(walk.target.0 - pos.0);
            let mut delta = want - heading;
            delta = (delta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
                - std::f64::consts::PI;
            heading += 0.35 * delta + turn.sample(rng);
            let next = (pos.0 + STEP * heading.cos(), pos.1 + STEP * heading.sin());
            if !in_vein_region(next) {
                break;
            }
            pos = next;
            pts.push(pos);
            if walk.depth < 2 && pts.len() > 2 && rng.random_bool(0.14) {
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let h = heading + side * rng.random_range(0.5..1.1);
                pending.push(Walk {
                    pos,
                    heading: h,
                    target: (pos.0 + 400.0 * h.cos(), pos.1 + 400.0 * h.sin()),
                    width: walk.width * rng.random_range(0.55..0.75),
                    steps: rng.random_range(4..10),
                    depth: walk.depth + 1,
                });
            }
        }
        if pts.len() < 3 {
            continue;
        }
        let smooth = catmull_rom(&pts, 4);
        let n = smooth.len() - 1;
        let widths = (0..n)
            .map(|i| (walk.width * (1.0 - 0.3 * i as f64 / n as f64)).max(8.0))
            .collect();
        // every tree keeps at least two shallow trunks so reflected scenes show veins
        let shallow = if walk.depth == 0 && shallow_count < 2 {
            true
        } else {
            rng.random_bool(0.5)
        };
        shallow_count += shallow as usize;
        tree.push(VeinPolyline {
            points: smooth,
            widths,
            shallow,
        });
    }
    tree
}

/// Centripetal-free uniform Catmull-Rom through `pts`, `sub` samples per span.
pub fn catmull_rom(pts: &[(f64, f64)], sub: usize) -> Vec<(f64, f64)> {
    if pts.len() < 2 || sub == 0 {
        return pts.to_vec();
    }
    let at = |i: isize| pts[i.clamp(0, pts.len() as isize - 1) as usize];
    let mut out = Vec::with_capacity((pts.len() - 1) * sub + 1);
    for i in 0..pts.len() as isize - 1 {
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        for s in 0..sub {
            let t = s as f64 / sub as f64;
            let (t2, t3) = (t * t, t * t * t);
            let f = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b
                    + (c - a) * t
                    + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2
                    + (3.0 * b - a - 3.0 * c + d) * t3)
            };
            out.push((f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1)));
        }
    }
    out.push(*pts.last().unwrap());
    out
}
