//! Diagnostic rendering: detected circles and the ROI outline burned into a copy of the input.

use crate::hough::{circle_offsets, CircleHit};
use crate::image::GrayImage;
use crate::roi::RoiSpec;

fn plot(img: &mut GrayImage, x: f64, y: f64, v: u8) {
    let (xi, yi) = (x.round(), y.round());
    if xi >= 0.0 && yi >= 0.0 && xi < img.width() as f64 && yi < img.height() as f64 {
        img.set(xi as u32, yi as u32, v);
    }
}

pub fn draw_circle(img: &mut GrayImage, hit: &CircleHit, v: u8) {
    let r = hit.r.round().max(1.0) as u32;
    for (dx, dy) in circle_offsets(r) {
        plot(img, hit.cx + dx as f64, hit.cy + dy as f64, v);
    }
    // center cross
    for d in -2..=2 {
        plot(img, hit.cx + d as f64, hit.cy, v);
        plot(img, hit.cx, hit.cy + d as f64, v);
    }
}

pub fn draw_line(img: &mut GrayImage, a: (f64, f64), b: (f64, f64), v: u8) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        plot(img, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), v);
    }
}

pub fn draw_roi(img: &mut GrayImage, spec: &RoiSpec, v: u8) {
    let c = spec.corners();
    for i in 0..4 {
        draw_line(img, c[i], c[(i + 1) % 4], v);
    }
}

/// Copy of `img` with every hit circled and the ROI square outlined. The
/// peg pair is drawn white, other hits mid-gray.
pub fn render_overlay(
    img: &GrayImage,
    hits: &[CircleHit],
    pegs: &[CircleHit],
    roi: Option<&RoiSpec>,
) -> GrayImage {
    let mut out = img.clone();
    for h in hits {
        draw_circle(&mut out, h, 128);
    }
    for h in pegs {
        draw_circle(&mut out, h, 255);
    }
    if let Some(spec) = roi {
        draw_roi(&mut out, spec, 255);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_outline_hits_corners() {
        let img = GrayImage::new(100, 100);
        let spec = RoiSpec {
            center: (50.0, 50.0),
            side: 40,
            rotation: 0.0,
            pixel_scale: 1.0,
            clamped: false,
        };
        let out = render_overlay(&img, &[], &[], Some(&spec));
        assert_eq!(out.get(30, 30), 255);
        assert_eq!(out.get(70, 70), 255);
        assert_eq!(out.get(50, 30), 255);
        assert_eq!(out.get(50, 50), 0);
        assert_eq!(out.data().iter().filter(|&&v| v == 255).count(), 160);
    }

    #[test]
    fn circles_clip_at_border() {
        let mut img = GrayImage::new(20, 20);
        draw_circle(
            &mut img,
            &CircleHit {
                cx: 0.0,
                cy: 0.0,
                r: 5.0,
                score: 1.0,
            },
            200,
        );
        assert_eq!(img.get(5, 0), 200);
        assert_eq!(img.get(0, 5), 200);
    }
}
