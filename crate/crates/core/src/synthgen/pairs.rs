//! Synthetic matcher training pairs: warp, crop, degrade.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::degrade::{degrade, DegradationConfig};
use super::warp_sample::{sample_flow_field, WarpConfig};
use crate::error::{BlurefError, Result};
use crate::image::{warp_backward, BinaryMask, FlowField, Image};

/// One synthetic matcher training sample. `gt_flow` maps warped coordinates
/// into `gt` (backward-warp convention); `valid` marks pixels whose flow
/// target lies inside `gt`. `clean` is the pre-degradation warped crop kept
/// for consistency checks.
#[derive(Debug, Clone)]
pub struct WarpPair {
    pub warped: Image,
    pub gt: Image,
    pub gt_flow: FlowField,
    pub valid: BinaryMask,
    pub clean: Image,
    pub seed: u64,
}

/// Build a training pair: resize the sharp source to the oversize dims,
/// apply a sampled dense warp, centrally crop warped/gt/flow, then run the
/// degradation pipeline on the warped crop.
pub fn make_warp_pair(
    sharp: &Image,
    wcfg: &WarpConfig,
    dcfg: &DegradationConfig,
    seed: u64,
) -> Result<WarpPair> {
    make_warp_pair_from(sharp, sharp, wcfg, dcfg, seed)
}

/// [`make_warp_pair`] with the two sides drawn from different pixel-aligned
/// sources: the warped (matching-target) side comes from `target_source`
/// and the ground-truth (reference) side from `ref_source`. Passing a real
/// blurry frame as `target_source` and its aligned sharp frame as
/// `ref_source` trains the matcher on the true blur-vs-sharp domain gap
/// instead of a synthetic approximation of it.
pub fn make_warp_pair_from(
    target_source: &Image,
    ref_source: &Image,
    wcfg: &WarpConfig,
    dcfg: &DegradationConfig,
    seed: u64,
) -> Result<WarpPair> {
    if target_source.height().min(target_source.width()) < 32 {
        return Err(BlurefError::InvalidInput(format!(
            "source {}x{} too small (min dim 32)",
            target_source.height(),
            target_source.width()
        )));
    }
    if !target_source.same_dims(ref_source) {
        return Err(BlurefError::DimensionMismatch(
            "target and reference sources must be pixel-aligned with equal dims".into(),
        ));
    }
    wcfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flow_seed: u64 = rng.gen();
    let degrade_seed: u64 = rng.gen();

    let resized = ref_source.resize_bilinear(wcfg.oversize_height, wcfg.oversize_width);
    let resized_t = if std::ptr::eq(target_source, ref_source) {
        resized.clone()
    } else {
        target_source.resize_bilinear(wcfg.oversize_height, wcfg.oversize_width)
    };
    let flow = sample_flow_field(wcfg, flow_seed)?;
    let deformed = warp_backward(&resized_t, &flow)?;

    let top = (wcfg.oversize_height - wcfg.crop_height) / 2;
    let left = (wcfg.oversize_width - wcfg.crop_width) / 2;
    let h = wcfg.crop_height;
    let w = wcfg.crop_width;

    let clean = deformed.crop(top, left, h, w)?;
    let gt = resized.crop(top, left, h, w)?;
    // crop-local flow: out(x) = gt(x + f); valid iff the bilinear footprint
    // stays inside the crop
    let gt_flow = FlowField::from_fn(h, w, |y, x| {
        let (dx, dy) = flow.get(top + y, left + x);
        (dx, dy)
    });
    let valid = BinaryMask::from_fn(h, w, |y, x| {
        let (dx, dy) = gt_flow.get(y, x);
        let tx = x as f32 + dx;
        let ty = y as f32 + dy;
        tx >= 0.0 && tx <= (w - 1) as f32 && ty >= 0.0 && ty <= (h - 1) as f32
    });

    let warped = degrade(&clean, dcfg, degrade_seed)?;
    Ok(WarpPair { warped, gt, gt_flow, valid, clean, seed })
}
