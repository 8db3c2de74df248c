//! Image-quality metrics: PSNR (color and gray) and windowed SSIM.

use image::{GrayImage, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("image {0}x{1} smaller than {2}x{2} SSIM window")]
    TooSmallForWindow(u32, u32, u32),
}

/// How PSNR treats the three channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsnrMode {
    /// MSE pooled over all three channels.
    Color,
    /// Computed on BT.601 luma 0.299 R + 0.587 G + 0.114 B.
    Gray,
}

/// BT.601 luma of an 8-bit RGB pixel, kept in f64.
pub fn luma(px: [u8; 3]) -> f64 {
    0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
}

fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::DimensionMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over the full extent of both images.
/// Identical images give `f64::INFINITY`.
pub fn psnr(test: &RgbImage, reference: &RgbImage, mode: PsnrMode) -> Result<f64, MetricsError> {
    check_dims(test.dimensions(), reference.dimensions())?;
    let mut sum_sq = 0.0f64;
    let mut count = 0u64;
    for (t, r) in test.pixels().zip(reference.pixels()) {
        match mode {
            PsnrMode::Color => {
                for c in 0..3 {
                    let d = t.0[c] as f64 - r.0[c] as f64;
                    sum_sq += d * d;
                }
                count += 3;
            }
            PsnrMode::Gray => {
                let d = luma(t.0) - luma(r.0);
                sum_sq += d * d;
                count += 1;
            }
        }
    }
    let mse = sum_sq / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

const SSIM_WINDOW: u32 = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 255.0;

fn gaussian_kernel() -> [f64; SSIM_WINDOW as usize] {
    let mut k = [0.0; SSIM_WINDOW as usize];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Mean structural similarity over all valid (fully interior) window positions,
/// with an 11x11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03, L = 255.
pub fn ssim(test: &GrayImage, reference: &GrayImage) -> Result<f64, MetricsError> {
    check_dims(test.dimensions(), reference.dimensions())?;
    let (w, h) = test.dimensions();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmallForWindow(w, h, SSIM_WINDOW));
    }
    let kernel = gaussian_kernel();
    let wu = w as usize;
    let hu = h as usize;
    let a: Vec<f64> = test.as_raw().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = reference.as_raw().iter().map(|&v| v as f64).collect();

    // Separable Gaussian filtering of the five moment images, valid region only.
    let planes = [
        a.clone(),
        b.clone(),
        a.iter().map(|v| v * v).collect::<Vec<_>>(),
        b.iter().map(|v| v * v).collect::<Vec<_>>(),
        a.iter().zip(&b).map(|(x, y)| x * y).collect::<Vec<_>>(),
    ];
    let vw = wu - SSIM_WINDOW as usize + 1;
    let vh = hu - SSIM_WINDOW as usize + 1;
    let filtered: Vec<Vec<f64>> = planes
        .iter()
        .map(|plane| {
            // horizontal pass
            let mut tmp = vec![0.0; vw * hu];
            for y in 0..hu {
                for x in 0..vw {
                    let mut s = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        s += kv * plane[y * wu + x + k];
                    }
                    tmp[y * vw + x] = s;
                }
            }
            // vertical pass
            let mut out = vec![0.0; vw * vh];
            for y in 0..vh {
                for x in 0..vw {
                    let mut s = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        s += kv * tmp[(y + k) * vw + x];
                    }
                    out[y * vw + x] = s;
                }
            }
            out
        })
        .collect();

    let c1 = (SSIM_K1 * SSIM_L).powi(2);
    let c2 = (SSIM_K2 * SSIM_L).powi(2);
    let mut total = 0.0;
    for i in 0..vw * vh {
        let mu_a = filtered[0][i];
        let mu_b = filtered[1][i];
        let var_a = filtered[2][i] - mu_a * mu_a;
        let var_b = filtered[3][i] - mu_b * mu_b;
        let cov = filtered[4][i] - mu_a * mu_b;
        let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
            / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        total += s;
    }
    Ok(total / (vw * vh) as f64)
}

/// Converts an RGB image to BT.601 luma, rounded to 8 bits.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let mut out = GrayImage::new(img.width(), img.height());
    for (src, dst) in img.pixels().zip(out.pixels_mut()) {
        dst.0 = [luma(src.0).round().clamp(0.0, 255.0) as u8];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rgb(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
        let mut img = RgbImage::new(w, h);
        for p in img.pixels_mut() {
            p.0 = [rng.gen(), rng.gen(), rng.gen()];
        }
        img
    }

    fn random_gray(rng: &mut ChaCha8Rng, w: u32, h: u32) -> GrayImage {
        let mut img = GrayImage::new(w, h);
        for p in img.pixels_mut() {
            p.0 = [rng.gen()];
        }
        img
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_rgb(&mut rng, 16, 16);
        assert_eq!(psnr(&img, &img, PsnrMode::Color).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&img, &img, PsnrMode::Gray).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_black_vs_white_is_zero_db() {
        let black = RgbImage::new(8, 8);
        let white = RgbImage::from_pixel(8, 8, image::Rgb([255, 255, 255]));
        let db = psnr(&black, &white, PsnrMode::Color).unwrap();
        assert!(db.abs() < 1e-12, "{db}");
        let db = psnr(&black, &white, PsnrMode::Gray).unwrap();
        assert!(db.abs() < 1e-12, "{db}");
    }

    #[test]
    fn psnr_single_channel_offset_oracle() {
        // one channel off by 5 everywhere: pooled MSE = 25/3
        let a = RgbImage::from_pixel(4, 4, image::Rgb([100, 100, 100]));
        let b = RgbImage::from_pixel(4, 4, image::Rgb([105, 100, 100]));
        let expected = 10.0 * (255.0f64 * 255.0 / (25.0 / 3.0)).log10();
        let got = psnr(&a, &b, PsnrMode::Color).unwrap();
        assert!((got - expected).abs() < 1e-12);
        // gray: luma differs by 0.299 * 5
        let d = 0.299 * 5.0f64;
        let expected = 10.0 * (255.0f64 * 255.0 / (d * d)).log10();
        let got = psnr(&a, &b, PsnrMode::Gray).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn psnr_dimension_mismatch() {
        let a = RgbImage::new(4, 4);
        let b = RgbImage::new(4, 5);
        assert!(psnr(&a, &b, PsnrMode::Color).is_err());
    }

    #[test]
    fn psnr_monotone_under_increasing_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let reference = random_rgb(&mut rng, 48, 48);
        let mut prev = f64::INFINITY;
        for amplitude in [2i16, 8, 32, 96] {
            let mut noisy = reference.clone();
            for p in noisy.pixels_mut() {
                for c in 0..3 {
                    let n = rng.gen_range(-amplitude..=amplitude);
                    p.0[c] = (p.0[c] as i16 + n).clamp(0, 255) as u8;
                }
            }
            let db = psnr(&noisy, &reference, PsnrMode::Color).unwrap();
            assert!(db < prev, "amplitude {amplitude}: {db} !< {prev}");
            prev = db;
        }
    }

    #[test]
    fn psnr_gray_invariant_under_shared_pixel_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_rgb(&mut rng, 12, 12);
        // reverse the pixel order of both images identically
        let rev = |src: &RgbImage| {
            let mut out = RgbImage::new(12, 12);
            for (i, p) in src.pixels().enumerate() {
                let j = (144 - 1 - i) as u32;
                out.put_pixel(j % 12, j / 12, *p);
            }
            out
        };
        let a = rev(&img);
        assert_eq!(psnr(&a, &a, PsnrMode::Gray).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_gray(&mut rng, 32, 32);
        let s = ssim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn ssim_equal_constants_is_one() {
        let img = GrayImage::from_pixel(16, 16, image::Luma([77]));
        let s = ssim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn ssim_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_gray(&mut rng, 24, 24);
        let b = random_gray(&mut rng, 24, 24);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = GrayImage::new(10, 10);
        assert!(matches!(ssim(&a, &a), Err(MetricsError::TooSmallForWindow(10, 10, 11))));
    }

    /// Independent per-window SSIM with no separable-filter shortcuts.
    fn ssim_brute_force(a: &GrayImage, b: &GrayImage) -> f64 {
        let kernel = gaussian_kernel();
        let c1 = (SSIM_K1 * SSIM_L).powi(2);
        let c2 = (SSIM_K2 * SSIM_L).powi(2);
        let (w, h) = a.dimensions();
        let n = SSIM_WINDOW;
        let mut total = 0.0;
        let mut count = 0u64;
        for wy in 0..=(h - n) {
            for wx in 0..=(w - n) {
                let (mut mu_a, mut mu_b) = (0.0, 0.0);
                let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
                for dy in 0..n {
                    for dx in 0..n {
                        let wgt = kernel[dy as usize] * kernel[dx as usize];
                        let va = a.get_pixel(wx + dx, wy + dy).0[0] as f64;
                        let vb = b.get_pixel(wx + dx, wy + dy).0[0] as f64;
                        mu_a += wgt * va;
                        mu_b += wgt * vb;
                        aa += wgt * va * va;
                        bb += wgt * vb * vb;
                        ab += wgt * va * vb;
                    }
                }
                let var_a = aa - mu_a * mu_a;
                let var_b = bb - mu_b * mu_b;
                let cov = ab - mu_a * mu_b;
                total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let a = random_gray(&mut rng, 64, 64);
            let b = random_gray(&mut rng, 64, 64);
            let fast = ssim(&a, &b).unwrap();
            let slow = ssim_brute_force(&a, &b);
            assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
        }
    }

    #[test]
    fn ssim_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_gray(&mut rng, 20, 20);
            let b = random_gray(&mut rng, 20, 20);
            let s = ssim(&a, &b).unwrap();
            assert!((-1.0..=1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn to_gray_oracle() {
        let img = RgbImage::from_pixel(2, 1, image::Rgb([10, 20, 30]));
        // 0.299*10 + 0.587*20 + 0.114*30 = 18.15 -> 18
        assert_eq!(to_gray(&img).get_pixel(0, 0).0[0], 18);
    }
}
