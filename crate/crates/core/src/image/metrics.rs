//! Full-reference quality metrics: PSNR, SSIM, masked PSNR.

use super::{BinaryMask, Image};
use crate::error::{BlurefError, Result};

/// PSNR returned for identical images; keeps the metric finite for logs.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 7;
const SSIM_SIGMA: f64 = 1.5;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if !a.same_dims(b) {
        return Err(BlurefError::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`] for zero MSE.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_dims(a, b)?;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// PSNR with the MSE averaged only over pixels where `mask == 1` (all channels).
pub fn masked_psnr(a: &Image, b: &Image, mask: &BinaryMask) -> Result<f64> {
    check_dims(a, b)?;
    if a.height() != mask.height() || a.width() != mask.width() {
        return Err(BlurefError::DimensionMismatch("mask dims differ from images".into()));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if mask.get(y, x) == 0 {
                continue;
            }
            for c in 0..a.channels() {
                let d = a.get(y, x, c) as f64 - b.get(y, x, c) as f64;
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(BlurefError::UndefinedRegion("masked PSNR over an all-zero mask".into()));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    let mut sum = 0.0;
    for y in -half..=half {
        for x in -half..=half {
            let v = (-((x * x + y * y) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w.push(v);
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Mean single-scale SSIM over valid 7x7 Gaussian windows (sigma 1.5),
/// C1 = (0.01)^2, C2 = (0.03)^2 at unit peak. RGB inputs are converted to
/// luma first.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(BlurefError::InvalidInput(format!(
            "image {}x{} smaller than the {}x{} SSIM window",
            a.height(),
            a.width(),
            SSIM_WINDOW,
            SSIM_WINDOW
        )));
    }
    let ga = a.to_gray();
    let gb = b.to_gray();
    let window = gaussian_window();
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);

    let h = a.height();
    let w = a.width();
    let mut total = 0.0f64;
    let mut count = 0usize;
    for y in 0..=(h - SSIM_WINDOW) {
        for x in 0..=(w - SSIM_WINDOW) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            let mut wi = 0;
            for dy in 0..SSIM_WINDOW {
                for dx in 0..SSIM_WINDOW {
                    let wv = window[wi];
                    wi += 1;
                    let va = ga.get(y + dy, x + dx, 0) as f64;
                    let vb = gb.get(y + dy, x + dx, 0) as f64;
                    mu_a += wv * va;
                    mu_b += wv * vb;
                    aa += wv * va * va;
                    bb += wv * vb * vb;
                    ab += wv * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 1, |y, x, _| ((y * 37 + x * 11) % 29) as f32 / 28.0)
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let a = textured(8, 8);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_constant_half_error() {
        let a = Image::constant(8, 8, 1, 0.0);
        let b = Image::constant(8, 8, 1, 0.5);
        let v = psnr(&a, &b, 1.0).unwrap();
        assert!((v - 10.0 * (1.0f64 / 0.25).log10()).abs() < 1e-9);
        assert!((v - 6.0206).abs() < 1e-3);
    }

    #[test]
    fn psnr_symmetric_and_monotone() {
        let a = textured(8, 8);
        for &e in &[0.1f32, 0.2, 0.4] {
            let mut b = a.clone();
            for v in b.data_mut() {
                *v += e;
            }
            let mut c = a.clone();
            for v in c.data_mut() {
                *v += e * 2.0;
            }
            assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
            assert!(psnr(&a, &b, 1.0).unwrap() > psnr(&a, &c, 1.0).unwrap());
        }
    }

    #[test]
    fn ssim_self_is_one() {
        let a = textured(16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetric() {
        let a = textured(16, 16);
        let b = Image::from_fn(16, 16, 1, |y, x, _| ((y * 5 + x * 3) % 13) as f32 / 12.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_pair_matches_direct_formula() {
        // For two constant images every window reduces to the same closed form:
        // variances and covariance vanish, mu_a = 0, mu_b = 1.
        let a = Image::constant(16, 16, 1, 0.0);
        let b = Image::constant(16, 16, 1, 1.0);
        let c1 = 0.01f64 * 0.01;
        let c2 = 0.03f64 * 0.03;
        let expected = ((2.0 * 0.0 * 1.0 + c1) * c2) / ((0.0 + 1.0 + c1) * c2);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_tiny_images() {
        let a = Image::zeros(4, 4, 1);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn masked_psnr_full_mask_matches_psnr() {
        let a = textured(12, 12);
        let b = Image::from_fn(12, 12, 1, |y, x, _| ((y + x) % 7) as f32 / 6.0);
        let m = BinaryMask::ones(12, 12);
        let d = (masked_psnr(&a, &b, &m).unwrap() - psnr(&a, &b, 1.0).unwrap()).abs();
        assert!(d < 1e-9);
    }

    #[test]
    fn masked_psnr_ignores_unmasked_pixels() {
        let a = textured(8, 8);
        let mut b = a.clone();
        // corrupt only the right half, mask only the left
        for y in 0..8 {
            for x in 4..8 {
                b.set(y, x, 0, 0.0);
            }
        }
        let m = BinaryMask::from_fn(8, 8, |_, x| x < 4);
        assert_eq!(masked_psnr(&a, &b, &m).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn masked_psnr_half_mask_constant_error() {
        let a = Image::constant(8, 8, 1, 0.0);
        let b = Image::constant(8, 8, 1, 0.5);
        let m = BinaryMask::from_fn(8, 8, |y, _| y < 4);
        let v = masked_psnr(&a, &b, &m).unwrap();
        assert!((v - 6.0206).abs() < 1e-3);
    }

    #[test]
    fn masked_psnr_all_zero_mask_is_error() {
        let a = textured(8, 8);
        let m = BinaryMask::zeros(8, 8);
        assert!(masked_psnr(&a, &a, &m).is_err());
    }
}
