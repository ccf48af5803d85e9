//! Backward warping with bilinear sampling.

use super::{FlowField, Image};
use crate::error::{BlurefError, Result};

/// Backward-warp `reference` through `flow`: `out(y, x) = ref(y + dy, x + dx)`
/// with bilinear sampling and edge-clamped coordinates.
pub fn warp_backward(reference: &Image, flow: &FlowField) -> Result<Image> {
    if reference.height() != flow.height() || reference.width() != flow.width() {
        return Err(BlurefError::DimensionMismatch(format!(
            "image {}x{} vs flow {}x{}",
            reference.height(),
            reference.width(),
            flow.height(),
            flow.width()
        )));
    }
    Ok(Image::from_fn(reference.height(), reference.width(), reference.channels(), |y, x, c| {
        let (dx, dy) = flow.get(y, x);
        reference.sample_bilinear(y as f32 + dy, x as f32 + dx, c)
    }))
}
