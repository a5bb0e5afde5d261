use veinroi::edge::canny;
use veinroi::enhance::{enhance, EnhanceParams};
use veinroi::hough::CircleHit;
use veinroi::image::{decode, encode_pgm, normalize_exposure, resample};
use veinroi::profile::{Illumination, IlluminationProfile};
use veinroi::roi::{
    detect_pegs, extract, extract_roi, extract_with, select_peg_pair, ExtractOptions,
};
use veinroi::synth::{
    draw_corpus_specs, render_scene, vein_contrast_ratio, CorpusOptions, ScenePose, SceneSpec,
};
use veinroi::{GrayImage, RoiResult};

fn profile(ill: Illumination) -> IlluminationProfile {
    IlluminationProfile::for_illumination(ill)
}

fn run(spec: &SceneSpec) -> (RoiResult, veinroi::GroundTruth, GrayImage) {
    let (img, truth) = render_scene(spec).unwrap();
    (
        extract(&img, &profile(spec.illumination)).unwrap(),
        truth,
        img,
    )
}

fn peg_errors(r: &RoiResult, truth: &veinroi::GroundTruth) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for (hit, c) in [r.pegs.left, r.pegs.right].iter().zip(truth.peg_centers) {
        worst.0 = worst.0.max((hit.cx - c.0).hypot(hit.cy - c.1));
        worst.1 = worst.1.max((hit.r - truth.peg_radius).abs());
    }
    worst
}

#[test]
fn reference_scene_round_trips() {
    for ill in Illumination::ALL {
        let spec = SceneSpec::reference(1, ill, 2784, 1856);
        let (r, truth, _) = run(&spec);
        let (dc, dr) = peg_errors(&r, &truth);
        assert!(dc <= 1.0 && dr <= 1.0, "{ill}: center {dc} radius {dr}");
        assert!((r.scale - 1.0).abs() < 0.02, "{ill}: scale {}", r.scale);
        assert_eq!(r.spec.side, 500);
        assert_eq!(r.spec.side, (500.0 * r.scale).round() as u32);
        assert_eq!(r.roi.dims(), (500, 500));
        assert!(!r.spec.clamped);
    }
}

#[test]
fn roi_contains_veins() {
    let spec = SceneSpec::reference(2, Illumination::Transmitted, 1000, 667);
    let (r, truth, _) = run(&spec);
    let veins = extract_roi(&truth.vein_mask, &r.spec).unwrap();
    let frac = veins.data().iter().filter(|&&v| v > 127).count() as f64 / 250_000.0;
    assert!(frac > 0.03, "vein fraction {frac}");
}

#[test]
fn plate_height_factor_is_recovered() {
    let pose = ScenePose {
        scale: 1.25,
        ..ScenePose::default()
    };
    let spec = SceneSpec::posed(3, Illumination::Transmitted, 1000, 667, &pose);
    let (r, truth, _) = run(&spec);
    assert!((1.2..=1.3).contains(&r.scale), "scale {}", r.scale);
    assert_eq!(truth.true_scale, 1.25);
    assert_eq!(r.spec.side, (500.0 * r.scale).round() as u32);
}

#[test]
fn scale_is_linear_in_plate_height() {
    let base = run(&SceneSpec::reference(
        4,
        Illumination::Transmitted,
        1000,
        667,
    ))
    .0
    .scale;
    for k in [0.85, 1.1, 1.3] {
        let pose = ScenePose {
            scale: k,
            ..ScenePose::default()
        };
        let s = run(&SceneSpec::posed(
            4,
            Illumination::Transmitted,
            1000,
            667,
            &pose,
        ))
        .0
        .scale;
        assert!(
            (s / (k * base) - 1.0).abs() <= 0.05,
            "k={k}: {s} vs {}",
            k * base
        );
    }
}

#[test]
fn decoy_with_wrong_separation_loses() {
    let spec = SceneSpec::reference(5, Illumination::Transmitted, 1000, 667);
    let (img, truth) = render_scene(&spec).unwrap();
    let p = profile(spec.illumination);
    let mut hits = detect_pegs(&img, &p, &ExtractOptions::default()).unwrap();
    let decoy = CircleHit {
        cx: truth.peg_centers[0].0,
        cy: 60.0,
        r: truth.peg_radius,
        score: 1.1,
    };
    hits.insert(0, decoy);
    let pair = select_peg_pair(&hits, &p.resolve(img.width())).unwrap();
    for (h, c) in [pair.left, pair.right].iter().zip(truth.peg_centers) {
        assert!((h.cx - c.0).hypot(h.cy - c.1) <= 2.0);
    }
}

#[test]
fn two_discs_give_exactly_two_hits() {
    let (w, h) = (1000u32, 667u32);
    let r = 18.0;
    let centers = [(380.3, 450.6), (595.7, 452.1)];
    let img = GrayImage::from_fn(w, h, |x, y| {
        let mut v = 110.0;
        for c in centers {
            let d = (x as f64 - c.0).hypot(y as f64 - c.1);
            let cov = (r + 0.5 - d).clamp(0.0, 1.0);
            v = v * (1.0 - cov) + 10.0 * cov;
        }
        v.round() as u8
    });
    let hits = detect_pegs(
        &img,
        &profile(Illumination::Transmitted),
        &ExtractOptions::default(),
    )
    .unwrap();
    assert_eq!(hits.len(), 2, "{hits:?}");
    for c in centers {
        assert!(hits
            .iter()
            .any(|h| (h.cx - c.0).hypot(h.cy - c.1) <= 2.0 && (h.r - r).abs() <= 1.0));
    }
}

#[test]
fn rotation_moves_pegs_with_the_scene() {
    let a = SceneSpec::reference(6, Illumination::Transmitted, 1000, 667);
    let b = SceneSpec {
        rotation: 10f64.to_radians(),
        ..a.clone()
    };
    let (rb, tb, _) = run(&b);
    let (dc, dr) = peg_errors(&rb, &tb);
    assert!(dc <= 2.0 && dr <= 2.0);
    assert!((rb.pegs.axis_angle - 10f64.to_radians()).abs() < 0.01);
}

#[test]
fn rotated_scene_yields_the_same_roi() {
    let a = SceneSpec::reference(7, Illumination::Transmitted, 1000, 667);
    let b = SceneSpec {
        rotation: 10f64.to_radians(),
        ..a.clone()
    };
    let (ra, ta, _) = run(&a);
    let (rb, _, _) = run(&b);
    let hand = extract_roi(&ta.hand_mask, &ra.spec).unwrap();
    let (mut sum, mut n) = (0.0, 0.0);
    for i in 0..250_000 {
        if hand.data()[i] > 127 {
            sum += (ra.roi.data()[i] as f64 - rb.roi.data()[i] as f64).abs();
            n += 1.0;
        }
    }
    let mad = sum / n;
    assert!(mad <= 8.0, "mean abs difference {mad} levels");
}

#[test]
fn exposure_gain_does_not_move_pegs() {
    let a = SceneSpec::reference(8, Illumination::Transmitted, 1000, 667);
    let b = SceneSpec {
        exposure_gain: 0.5,
        ..a.clone()
    };
    let (ra, _, _) = run(&a);
    let (rb, _, _) = run(&b);
    for (p, q) in [(ra.pegs.left, rb.pegs.left), (ra.pegs.right, rb.pegs.right)] {
        assert!((p.cx - q.cx).abs() <= 1.0 && (p.cy - q.cy).abs() <= 1.0);
    }
}

#[test]
fn downscaling_halves_radii() {
    let spec = SceneSpec::reference(9, Illumination::Transmitted, 1000, 1000);
    let (img, _) = render_scene(&spec).unwrap();
    let p = profile(Illumination::Transmitted);
    let full = extract(&img, &p).unwrap();
    let half = extract(&resample(&img, 500, 500).unwrap(), &p).unwrap();
    for (a, b) in [
        (full.pegs.left, half.pegs.left),
        (full.pegs.right, half.pegs.right),
    ] {
        assert!((a.r / 2.0 - b.r).abs() <= 1.0, "{} vs {}", a.r, b.r);
    }
}

#[test]
fn translation_shifts_roi_center() {
    let a = SceneSpec::reference(10, Illumination::Transmitted, 1000, 667);
    let pose = ScenePose {
        translation: (37.0, -21.0),
        ..ScenePose::default()
    };
    let b = SceneSpec::posed(10, Illumination::Transmitted, 1000, 667, &pose);
    let (ra, _, _) = run(&a);
    let (rb, _, _) = run(&b);
    assert!((rb.spec.center.0 - ra.spec.center.0 - 37.0).abs() <= 1.0);
    assert!((rb.spec.center.1 - ra.spec.center.1 + 21.0).abs() <= 1.0);
    assert_eq!(ra.spec.side, rb.spec.side);
}

#[test]
fn roi_lands_on_hand_center() {
    let opts = CorpusOptions {
        n: 40,
        seed: 12,
        ..Default::default()
    };
    let mut near = 0;
    for spec in draw_corpus_specs(&opts).unwrap() {
        let (r, truth, _) = run(&spec);
        let d =
            (r.spec.center.0 - truth.hand_center.0).hypot(r.spec.center.1 - truth.hand_center.1);
        if d <= 0.15 * r.spec.side_px() {
            near += 1;
        }
    }
    assert!(near * 100 >= 95 * 40, "{near}/40");
}

#[test]
fn peg_edges_are_thin_rings_with_full_coverage() {
    let spec = SceneSpec::reference(13, Illumination::Transmitted, 1000, 667);
    let (img, truth) = render_scene(&spec).unwrap();
    let edges = canny(&img, &profile(Illumination::Transmitted).canny).unwrap();
    for c in truth.peg_centers {
        // a circle sample is covered by an edge pixel within 1 px of the circle and 1.5 px of the sample
        let ring: Vec<(f64, f64)> = edges
            .points()
            .map(|(x, y)| (x as f64, y as f64))
            .filter(|&(x, y)| ((x - c.0).hypot(y - c.1) - truth.peg_radius).abs() <= 1.0)
            .collect();
        let covered = (0..360)
            .filter(|&k| {
                let a = (k as f64).to_radians();
                let q = (
                    c.0 + truth.peg_radius * a.cos(),
                    c.1 + truth.peg_radius * a.sin(),
                );
                ring.iter().any(|p| (p.0 - q.0).hypot(p.1 - q.1) <= 1.5)
            })
            .count();
        assert!(covered >= 288, "coverage {covered}/360");
        // thinned: the ring is one pixel across, so no ray crosses it more than a couple of times
        let rad_width = edges
            .points()
            .filter(|&(x, y)| {
                ((x as f64 - c.0).hypot(y as f64 - c.1) - truth.peg_radius).abs() <= 3.0
            })
            .count() as f64
            / (std::f64::consts::TAU * truth.peg_radius);
        assert!(
            rad_width <= 1.5,
            "ring pixels per unit circumference {rad_width}"
        );
    }
}

#[test]
fn enhancement_raises_vein_contrast() {
    let spec = SceneSpec::reference(14, Illumination::Transmitted, 1000, 667);
    let (r, truth, _) = run(&spec);
    let veins = extract_roi(&truth.vein_mask, &r.spec).unwrap();
    let hand = extract_roi(&truth.hand_mask, &r.spec).unwrap();
    let before = vein_contrast_ratio(&r.roi, &veins, &hand, 5).unwrap();
    let after = vein_contrast_ratio(
        &enhance(&r.roi, &EnhanceParams::default()).unwrap(),
        &veins,
        &hand,
        5,
    )
    .unwrap();
    // ratios are vein/background; contrast improves when it drops
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn reflected_scene_with_reflected_profile() {
    let spec = SceneSpec::reference(15, Illumination::Reflected, 1000, 667);
    let (r, truth, _) = run(&spec);
    let (dc, dr) = peg_errors(&r, &truth);
    assert!(dc <= 2.0 && dr <= 2.0);
}

#[test]
fn parallel_hough_changes_nothing() {
    let spec = SceneSpec::reference(16, Illumination::Transmitted, 2784, 1856);
    let (img, _) = render_scene(&spec).unwrap();
    let p = profile(Illumination::Transmitted);
    let a = extract_with(
        &img,
        &p,
        &ExtractOptions {
            parallel_hough: false,
        },
    )
    .unwrap();
    let b = extract_with(
        &img,
        &p,
        &ExtractOptions {
            parallel_hough: true,
        },
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn extraction_is_deterministic() {
    let spec = SceneSpec::reference(17, Illumination::Reflected, 1000, 667);
    let (img, _) = render_scene(&spec).unwrap();
    let p = profile(Illumination::Reflected);
    assert_eq!(extract(&img, &p).unwrap(), extract(&img, &p).unwrap());
}

#[test]
fn pgm_round_trip_is_byte_identical() {
    let opts = CorpusOptions {
        n: 6,
        seed: 18,
        width: 500,
        height: 334,
        ..Default::default()
    };
    for spec in draw_corpus_specs(&opts).unwrap() {
        let (img, _) = render_scene(&spec).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(encode_pgm(&decode(&bytes).unwrap()), bytes);
    }
}

#[test]
fn normalization_is_idempotent_on_synth() {
    let (img, _) = render_scene(&SceneSpec::reference(
        19,
        Illumination::Transmitted,
        500,
        334,
    ))
    .unwrap();
    let n = normalize_exposure(&img, 0.0, 1.0).unwrap();
    assert_eq!(normalize_exposure(&n, 0.0, 1.0).unwrap(), n);
}
