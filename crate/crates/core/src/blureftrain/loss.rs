//! Confidence-masked reconstruction loss.

use serde::{Deserialize, Serialize};

use crate::error::{BlurefError, Result};
use crate::image::{BinaryMask, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMetric {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
}

fn check_dims(pred: &Image, target: &Image, mask: &BinaryMask) -> Result<()> {
    if !pred.same_dims(target) {
        return Err(BlurefError::DimensionMismatch("pred and target dims differ".into()));
    }
    if pred.height() != mask.height() || pred.width() != mask.width() {
        return Err(BlurefError::DimensionMismatch("mask dims differ from images".into()));
    }
    Ok(())
}

/// `sum |pred - target|^p * mask / (channels * max(sum mask, 1))`; an
/// all-zero mask yields exactly 0.
pub fn masked_loss(pred: &Image, target: &Image, mask: &BinaryMask, metric: LossMetric) -> Result<f64> {
    Ok(masked_loss_grad(pred, target, mask, metric)?.0)
}

/// Loss plus its analytic gradient with respect to `pred` (HWC order).
pub fn masked_loss_grad(
    pred: &Image,
    target: &Image,
    mask: &BinaryMask,
    metric: LossMetric,
) -> Result<(f64, Vec<f32>)> {
    check_dims(pred, target, mask)?;
    let c = pred.channels();
    let area: u64 = mask.values().iter().map(|&v| v as u64).sum();
    let norm = (c as f64) * (area.max(1) as f64);
    let inv = (1.0 / norm) as f32;
    let mut loss = 0.0f64;
    let mut grad = vec![0.0f32; pred.data().len()];
    let pd = pred.data();
    let td = target.data();
    let md = mask.values();
    for i in 0..pd.len() {
        if md[i / c] == 0 {
            continue;
        }
        let d = pd[i] - td[i];
        match metric {
            LossMetric::L1 => {
                loss += d.abs() as f64;
                grad[i] = d.signum() * inv;
            }
            LossMetric::L2 => {
                loss += (d * d) as f64;
                grad[i] = 2.0 * d * inv;
            }
        }
    }
    Ok((loss / norm, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, c, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn zero_mask_gives_zero_loss() {
        let a = noise(4, 4, 3, 1);
        let b = noise(4, 4, 3, 2);
        let m = BinaryMask::zeros(4, 4);
        assert_eq!(masked_loss(&a, &b, &m, LossMetric::L1).unwrap(), 0.0);
    }

    #[test]
    fn identical_images_give_zero_loss() {
        let a = noise(4, 4, 3, 1);
        let m = BinaryMask::ones(4, 4);
        assert_eq!(masked_loss(&a, &a.clone(), &m, LossMetric::L2).unwrap(), 0.0);
    }

    #[test]
    fn constant_l1_case() {
        // pred 0.2, target 0.5, full mask -> 0.3 regardless of coverage area
        let a = Image::constant(4, 4, 3, 0.2);
        let b = Image::constant(4, 4, 3, 0.5);
        let full = BinaryMask::ones(4, 4);
        let l = masked_loss(&a, &b, &full, LossMetric::L1).unwrap();
        assert!((l - 0.3).abs() < 1e-6);
        // half mask: area normalization keeps the value at 0.3
        let half = BinaryMask::from_fn(4, 4, |y, _| y < 2);
        let lh = masked_loss(&a, &b, &half, LossMetric::L1).unwrap();
        assert!((lh - 0.3).abs() < 1e-6);
    }

    #[test]
    fn loss_ignores_masked_out_pixels() {
        let a = noise(4, 4, 1, 1);
        let b = noise(4, 4, 1, 2);
        let m = BinaryMask::from_fn(4, 4, |y, x| (y + x) % 2 == 0);
        let base = masked_loss(&a, &b, &m, LossMetric::L1).unwrap();
        // perturb every masked-out pixel of both images
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        for y in 0..4 {
            for x in 0..4 {
                if m.get(y, x) == 0 {
                    let i = y * 4 + x;
                    a2.data_mut()[i] = 0.123;
                    b2.data_mut()[i] = 0.789;
                }
            }
        }
        let after = masked_loss(&a2, &b2, &m, LossMetric::L1).unwrap();
        assert_eq!(base, after);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for metric in [LossMetric::L1, LossMetric::L2] {
            for case in 0..10 {
                let pred = noise(3, 3, 1, 100 + case);
                let target = noise(3, 3, 1, 200 + case);
                let mask = BinaryMask::from_fn(3, 3, |_, _| rng.gen_bool(0.7));
                let (_, grad) = masked_loss_grad(&pred, &target, &mask, metric).unwrap();
                let eps = 1e-4f32;
                for i in 0..9 {
                    let mut p = pred.clone();
                    p.data_mut()[i] += eps;
                    let lp = masked_loss(&p, &target, &mask, metric).unwrap();
                    let mut m2 = pred.clone();
                    m2.data_mut()[i] -= eps;
                    let lm = masked_loss(&m2, &target, &mask, metric).unwrap();
                    let num = ((lp - lm) / (2.0 * eps as f64)) as f32;
                    let ana = grad[i];
                    let denom = num.abs().max(ana.abs()).max(1e-6);
                    assert!(
                        (ana - num).abs() / denom <= 1e-3,
                        "{metric:?} case {case} idx {i}: analytic {ana} vs numeric {num}"
                    );
                }
            }
        }
    }
}
