//! Exhaustive zero-normalized cross-correlation matching oracle.

use crate::error::{BlurefError, Result};
use crate::image::{ConfidenceMap, FlowField, Image};

/// Flow plus confidence, the per-pair matcher output.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub flow: FlowField,
    pub confidence: ConfidenceMap,
}

/// For each pixel, search the integer displacement in `[-radius, radius]^2`
/// maximizing the ZNCC of the `patch` x `patch` neighborhood (edge-clamped).
/// Confidence is `(ncc + 1) / 2`; a zero-variance target patch yields
/// confidence 0 and zero flow. First maximum wins on ties (row-major scan).
pub fn brute_force_match(
    target: &Image,
    reference: &Image,
    patch: usize,
    radius: usize,
) -> Result<MatchResult> {
    if patch % 2 == 0 || patch < 3 {
        return Err(BlurefError::InvalidInput(format!("patch must be odd >= 3, got {patch}")));
    }
    if radius < 1 {
        return Err(BlurefError::InvalidInput("radius must be >= 1".into()));
    }
    if !target.same_dims(reference) {
        return Err(BlurefError::DimensionMismatch("target and reference dims differ".into()));
    }
    if patch > target.height() || patch > target.width() {
        return Err(BlurefError::InvalidInput("patch larger than image".into()));
    }

    let tg = target.to_gray();
    let rg = reference.to_gray();
    let h = tg.height() as isize;
    let w = tg.width() as isize;
    let half = (patch / 2) as isize;
    let r = radius as isize;
    let area = (patch * patch) as f64;

    let gather = |img: &Image, cy: isize, cx: isize, buf: &mut Vec<f64>| {
        buf.clear();
        for dy in -half..=half {
            let y = (cy + dy).clamp(0, h - 1) as usize;
            for dx in -half..=half {
                let x = (cx + dx).clamp(0, w - 1) as usize;
                buf.push(img.get(y, x, 0) as f64);
            }
        }
    };

    let mut flow = FlowField::zeros(tg.height(), tg.width());
    let mut conf = vec![0.0f32; tg.height() * tg.width()];
    let mut tbuf: Vec<f64> = Vec::with_capacity(patch * patch);
    let mut rbuf: Vec<f64> = Vec::with_capacity(patch * patch);

    for y in 0..h {
        for x in 0..w {
            gather(&tg, y, x, &mut tbuf);
            let tmean = tbuf.iter().sum::<f64>() / area;
            let tvar: f64 = tbuf.iter().map(|v| (v - tmean) * (v - tmean)).sum();
            if tvar < 1e-12 {
                continue; // zero-variance convention: conf 0, flow 0
            }
            let tnorm = tvar.sqrt();
            let mut best_ncc = f64::NEG_INFINITY;
            let mut best = (0i32, 0i32);
            for dy in -r..=r {
                for dx in -r..=r {
                    gather(&rg, y + dy, x + dx, &mut rbuf);
                    let rmean = rbuf.iter().sum::<f64>() / area;
                    let rvar: f64 = rbuf.iter().map(|v| (v - rmean) * (v - rmean)).sum();
                    if rvar < 1e-12 {
                        continue;
                    }
                    let mut dot = 0.0;
                    for (tv, rv) in tbuf.iter().zip(&rbuf) {
                        dot += (tv - tmean) * (rv - rmean);
                    }
                    let ncc = dot / (tnorm * rvar.sqrt());
                    if ncc > best_ncc {
                        best_ncc = ncc;
                        best = (dx as i32, dy as i32);
                    }
                }
            }
            if best_ncc.is_finite() {
                flow.set(y as usize, x as usize, best.0 as f32, best.1 as f32);
                conf[(y * w + x) as usize] = (((best_ncc + 1.0) / 2.0).clamp(0.0, 1.0)) as f32;
            }
        }
    }
    Ok(MatchResult {
        flow,
        confidence: ConfidenceMap::new(tg.height(), tg.width(), conf)?,
    })
}
