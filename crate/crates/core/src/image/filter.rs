use super::{FloatImage, GrayImage};
use crate::error::{Error, Result};

/// Normalized sampled Gaussian with radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f32>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / denom).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| (w / sum) as f32).collect())
}

/// Separable Gaussian convolution with edge-clamp borders.
pub fn gaussian_blur(img: &FloatImage, sigma: f64) -> Result<FloatImage> {
    let kernel = gaussian_kernel(sigma)?;
    let r = kernel.len() / 2;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.data();

    let mut tmp = vec![0f32; w * h];
    let mut padded = vec![0f32; w + 2 * r];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        padded[..r].fill(row[0]);
        padded[r..r + w].copy_from_slice(row);
        padded[r + w..].fill(row[w - 1]);
        let out = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let window = &padded[x..x + kernel.len()];
            *o = window.iter().zip(&kernel).map(|(a, k)| a * k).sum();
        }
    }

    let mut out = FloatImage::new(img.width(), img.height());
    let dst = out.data_mut();
    for y in 0..h {
        let orow = &mut dst[y * w..(y + 1) * w];
        for (k, &wk) in kernel.iter().enumerate() {
            let sy = (y as i64 + k as i64 - r as i64).clamp(0, h as i64 - 1) as usize;
            let srow = &tmp[sy * w..(sy + 1) * w];
            for (o, s) in orow.iter_mut().zip(srow) {
                *o += wk * s;
            }
        }
    }
    Ok(out)
}

/// Intensity at the given quantile: the sample of rank `floor(q * (n - 1))`
/// in ascending order.
pub fn percentile(img: &GrayImage, q: f64) -> u8 {
    let hist = img.histogram();
    let n = img.data().len() as u64;
    let rank = (q.clamp(0.0, 1.0) * (n - 1) as f64).floor() as u64;
    let mut cum = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        cum += c;
        if cum > rank {
            return v as u8;
        }
    }
    255
}

/// Linear stretch sending the `low_pct` percentile to 0 and `high_pct` to 255.
/// Images whose anchors coincide (constant images) are returned unchanged.
pub fn normalize_exposure(img: &GrayImage, low_pct: f64, high_pct: f64) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&low_pct) || !(0.0..=1.0).contains(&high_pct) || low_pct >= high_pct {
        return Err(Error::InvalidParameter(format!(
            "percentiles must satisfy 0 <= low < high <= 1, got ({low_pct}, {high_pct})"
        )));
    }
    let lo = percentile(img, low_pct) as f64;
    let hi = percentile(img, high_pct) as f64;
    if hi <= lo {
        return Ok(img.clone());
    }
    let gain = 255.0 / (hi - lo);
    let lut: Vec<u8> = (0..256)
        .map(|v| ((v as f64 - lo) * gain).round().clamp(0.0, 255.0) as u8)
        .collect();
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    GrayImage::from_raw(img.width(), img.height(), data)
}

/// Bilinear resampling with corner-aligned grids: output corners land exactly
/// on input corners, and a same-size resample is the identity.
pub fn resample(img: &GrayImage, out_w: u32, out_h: u32) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidParameter(format!(
            "output size {out_w}x{out_h}"
        )));
    }
    if (out_w, out_h) == img.dims() {
        return Ok(img.clone());
    }
    let step = |n_in: u32, n_out: u32| {
        if n_out == 1 {
            0.0
        } else {
            (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };
    let (sx, sy) = (step(img.width(), out_w), step(img.height(), out_h));
    let center = |n_in: u32, n_out: u32| {
        if n_out == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            0.0
        }
    };
    let (ox, oy) = (center(img.width(), out_w), center(img.height(), out_h));
    Ok(GrayImage::from_fn(out_w, out_h, |x, y| {
        img.sample_bilinear(ox + x as f64 * sx, oy + y as f64 * sy)
            .round() as u8
    }))
}

/// Area-average downscale by an integer factor; trailing partial blocks are dropped.
pub fn downscale_box(img: &GrayImage, factor: u32) -> Result<GrayImage> {
    if factor == 0 {
        return Err(Error::InvalidParameter("downscale factor 0".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (ow, oh) = (img.width() / factor, img.height() / factor);
    if ow == 0 || oh == 0 {
        return Err(Error::InvalidParameter(format!(
            "{}x{} too small for factor {factor}",
            img.width(),
            img.height()
        )));
    }
    let w = img.width() as usize;
    let f = factor as usize;
    let area = (f * f) as u32;
    let mut sums = vec![0u32; ow as usize];
    let mut data = Vec::with_capacity(ow as usize * oh as usize);
    for by in 0..oh as usize {
        sums.fill(0);
        for y in by * f..(by + 1) * f {
            let row = &img.data()[y * w..y * w + ow as usize * f];
            for (s, block) in sums.iter_mut().zip(row.chunks_exact(f)) {
                *s += block.iter().map(|&v| v as u32).sum::<u32>();
            }
        }
        data.extend(sums.iter().map(|&s| ((s + area / 2) / area) as u8));
    }
    GrayImage::from_raw(ow, oh, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct 2-D convolution with the outer-product kernel and clamped reads.
    fn blur_oracle(img: &FloatImage, sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as i64;
        let g: Vec<f64> = (-r..=r)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        let g: Vec<f64> = g.iter().map(|v| v / s).collect();
        let mut out = Vec::new();
        for y in 0..img.height() as i64 {
            for x in 0..img.width() as i64 {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        acc += g[(dy + r) as usize]
                            * g[(dx + r) as usize]
                            * img.get_clamped(x + dx, y + dy) as f64;
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    #[test]
    fn kernel_radius_and_normalization() {
        assert_eq!(gaussian_kernel(1.0).unwrap().len(), 7);
        assert_eq!(gaussian_kernel(1.5).unwrap().len(), 11);
        assert_eq!(gaussian_kernel(0.1).unwrap().len(), 3);
        let s: f32 = gaussian_kernel(2.0).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(gaussian_kernel(0.0).is_err());
        assert!(gaussian_kernel(-1.0).is_err());
    }

    #[test]
    fn blur_constant_is_constant() {
        let img = FloatImage::from_fn(17, 9, |_, _| 0.37);
        for sigma in [0.5, 1.0, 3.3] {
            let b = gaussian_blur(&img, sigma).unwrap();
            assert!(b.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn blur_impulse_is_sampled_gaussian() {
        let img = FloatImage::from_fn(21, 21, |x, y| if x == 10 && y == 10 { 1.0 } else { 0.0 });
        let b = gaussian_blur(&img, 2.0).unwrap();
        let sum: f64 = b.data().iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        let k = gaussian_kernel(2.0).unwrap();
        for y in 0..21u32 {
            for x in 0..21u32 {
                let (dx, dy) = (x as i64 - 10, y as i64 - 10);
                let expect = if dx.abs() <= 6 && dy.abs() <= 6 {
                    k[(dx + 6) as usize] * k[(dy + 6) as usize]
                } else {
                    0.0
                };
                assert!((b.get(x, y) - expect).abs() < 1e-7);
            }
        }
        // radial symmetry of the sampled response
        assert!((b.get(12, 10) - b.get(10, 8)).abs() < 1e-7);
    }

    #[test]
    fn blur_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = FloatImage::from_fn(64, 64, |_, _| rng.random::<f32>());
        let fast = gaussian_blur(&img, 1.5).unwrap();
        let slow = blur_oracle(&img, 1.5);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let img = FloatImage::new(4, 4);
        assert!(matches!(
            gaussian_blur(&img, 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    proptest! {
        // Mean is preserved exactly (up to float error) when the clamp only
        // ever replicates a flat border band at least one kernel radius wide.
        #[test]
        fn blur_preserves_mean(seed in any::<u64>(), sigma in 0.3f64..2.5, border in 0.0f32..1.0) {
            let r = (3.0 * sigma).ceil() as u32;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (40 + 2 * r, 30 + 2 * r);
            let img = FloatImage::from_fn(w, h, |x, y| {
                if x < r || y < r || x >= w - r || y >= h - r { border } else { rng.random::<f32>() }
            });
            let b = gaussian_blur(&img, sigma).unwrap();
            prop_assert!((b.mean() - img.mean()).abs() < 1e-4);
        }
    }

    #[test]
    fn blur_mean_drift_on_unconstrained_random_images_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = FloatImage::from_fn(128, 128, |_, _| rng.random::<f32>());
        let b = gaussian_blur(&img, 1.0).unwrap();
        assert!((b.mean() - img.mean()).abs() < 1e-3);
    }

    #[test]
    fn normalize_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data: Vec<u8> = (0..400).map(|_| rng.random_range(100..=150)).collect();
        data[0] = 100;
        data[1] = 150;
        let img = GrayImage::from_raw(20, 20, data).unwrap();
        let out = normalize_exposure(&img, 0.0, 1.0).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            if *a == 100 {
                assert_eq!(*b, 0);
            }
            if *a == 150 {
                assert_eq!(*b, 255);
            }
        }
    }

    #[test]
    fn normalize_full_range_keeps_extrema() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut data: Vec<u8> = (0..1000).map(|_| rng.random()).collect();
        data[17] = 0;
        data[733] = 255;
        let img = GrayImage::from_raw(40, 25, data).unwrap();
        let out = normalize_exposure(&img, 0.01, 0.99).unwrap();
        assert_eq!(out.data()[17], 0);
        assert_eq!(out.data()[733], 255);
        assert_eq!(*out.data().iter().min().unwrap(), 0);
        assert_eq!(*out.data().iter().max().unwrap(), 255);
    }

    #[test]
    fn normalize_constant_unchanged_and_params_checked() {
        let img = GrayImage::filled(5, 5, 77);
        assert_eq!(normalize_exposure(&img, 0.01, 0.99).unwrap(), img);
        assert!(normalize_exposure(&img, 0.5, 0.5).is_err());
        assert!(normalize_exposure(&img, -0.1, 0.5).is_err());
        assert!(normalize_exposure(&img, 0.1, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn normalize_never_inverts_order(data in proptest::collection::vec(any::<u8>(), 64), lo in 0.0f64..0.4, hi in 0.6f64..1.0) {
            let img = GrayImage::from_raw(8, 8, data).unwrap();
            let out = normalize_exposure(&img, lo, hi).unwrap();
            for i in 0..64 {
                for j in 0..64 {
                    if img.data()[i] <= img.data()[j] {
                        prop_assert!(out.data()[i] <= out.data()[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn resample_identity_and_corners() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = GrayImage::from_fn(13, 7, |_, _| rng.random());
        assert_eq!(resample(&img, 13, 7).unwrap(), img);

        let checker = GrayImage::from_raw(2, 2, vec![0, 255, 255, 0]).unwrap();
        let up = resample(&checker, 4, 4).unwrap();
        assert_eq!(up.get(0, 0), 0);
        assert_eq!(up.get(3, 0), 255);
        assert_eq!(up.get(0, 3), 255);
        assert_eq!(up.get(3, 3), 0);
        assert!(resample(&checker, 0, 4).is_err());
    }

    #[test]
    fn downscale_box_averages_blocks() {
        let img = GrayImage::from_fn(9, 4, |x, y| {
            ((x / 2) * 10) as u8 + if y >= 2 { 1 } else { 0 }
        });
        let d = downscale_box(&img, 2).unwrap();
        assert_eq!(d.dims(), (4, 2));
        assert_eq!(d.get(0, 0), 0);
        assert_eq!(d.get(3, 0), 30);
        assert_eq!(d.get(2, 1), 21);
        assert_eq!(downscale_box(&img, 1).unwrap(), img);
        assert!(downscale_box(&img, 5).is_err());
    }
}
