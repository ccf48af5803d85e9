//! Self-supervised matcher training on synthetic warp pairs.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{normalize_gray, Matcher, MatcherConfig};
use crate::error::{BlurefError, Result};
use crate::image::{BinaryMask, FlowField};
use crate::nn::{adam_step, cosine_lr, sigmoid, AdamConfig, Feat};
use crate::synthgen::WarpPair;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub adam: AdamConfig,
    /// Confidence supervision: target 1 iff endpoint error < tau_c px inside valid.
    pub tau_c: f32,
    pub conf_loss_weight: f32,
    pub min_pairs: usize,
}

impl Default for MatchTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 2,
            lr_initial: 2e-4,
            lr_final: 1e-6,
            adam: AdamConfig::default(),
            tau_c: 1.0,
            conf_loss_weight: 0.5,
            min_pairs: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

struct LevelTarget {
    flow: Feat,
    valid: Vec<bool>,
}

fn build_level_targets(gt_flow: &FlowField, valid: &BinaryMask, levels: usize) -> Vec<LevelTarget> {
    let h = gt_flow.height();
    let w = gt_flow.width();
    let mut flow = Array3::<f32>::zeros((2, h, w));
    let mut ok = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = gt_flow.get(y, x);
            flow[[0, y, x]] = dx;
            flow[[1, y, x]] = dy;
            ok[y * w + x] = valid.get(y, x) == 1;
        }
    }
    let mut out = vec![LevelTarget { flow, valid: ok }];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let (_, ph, pw) = prev.flow.dim();
        let (nh, nw) = (ph / 2, pw / 2);
        let mut flow = Array3::<f32>::zeros((2, nh, nw));
        let mut ok = vec![false; nh * nw];
        for y in 0..nh {
            for x in 0..nw {
                for a in 0..2 {
                    let s = prev.flow[[a, 2 * y, 2 * x]]
                        + prev.flow[[a, 2 * y, 2 * x + 1]]
                        + prev.flow[[a, 2 * y + 1, 2 * x]]
                        + prev.flow[[a, 2 * y + 1, 2 * x + 1]];
                    flow[[a, y, x]] = 0.125 * s; // mean / 2: coarser pixels are 2x larger
                }
                ok[y * nw + x] = prev.valid[2 * y * pw + 2 * x]
                    && prev.valid[2 * y * pw + 2 * x + 1]
                    && prev.valid[(2 * y + 1) * pw + 2 * x]
                    && prev.valid[(2 * y + 1) * pw + 2 * x + 1];
            }
        }
        out.push(LevelTarget { flow, valid: ok });
    }
    out
}

/// Forward + backward on one pair; returns the scalar loss.
fn accumulate_pair(matcher: &mut Matcher, pair: &WarpPair, cfg: &MatchTrainConfig) -> Result<f64> {
    let target = normalize_gray(&pair.warped);
    let reference = normalize_gray(&pair.gt);
    let pass = matcher.forward_cached(&target, &reference);
    let levels = matcher.cfg.levels;
    let targets = build_level_targets(&pair.gt_flow, &pair.valid, levels);

    const EPS: f32 = 1e-6;
    let level_weight = 1.0 / levels as f32;
    let mut total_loss = 0.0f64;
    let mut grad_flow: Vec<Feat> = Vec::with_capacity(levels);
    for (l, tgt) in targets.iter().enumerate() {
        let cache = &pass.levels[l];
        let (_, h, w) = cache.flow.dim();
        let count = tgt.valid.iter().filter(|&&v| v).count().max(1) as f32;
        let mut g = Array3::<f32>::zeros((2, h, w));
        let mut loss = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                if !tgt.valid[y * w + x] {
                    continue;
                }
                let ex = cache.flow[[0, y, x]] - tgt.flow[[0, y, x]];
                let ey = cache.flow[[1, y, x]] - tgt.flow[[1, y, x]];
                let e = (ex * ex + ey * ey + EPS).sqrt();
                loss += e as f64;
                let scale = level_weight / (count * e);
                g[[0, y, x]] = scale * ex;
                g[[1, y, x]] = scale * ey;
            }
        }
        total_loss += (level_weight as f64) * loss / count as f64;
        grad_flow.push(g);
    }

    // confidence BCE at the finest level
    let fine = &pass.levels[0];
    let (_, h, w) = fine.flow.dim();
    let tgt0 = &targets[0];
    let n = (h * w) as f32;
    let mut gconf = Array3::<f32>::zeros((1, h, w));
    let mut conf_loss = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let ex = fine.flow[[0, y, x]] - tgt0.flow[[0, y, x]];
            let ey = fine.flow[[1, y, x]] - tgt0.flow[[1, y, x]];
            let epe = (ex * ex + ey * ey).sqrt();
            let label = if tgt0.valid[y * w + x] && epe < cfg.tau_c { 1.0f32 } else { 0.0 };
            let z = pass.conf_logits[[0, y, x]];
            let p = sigmoid(z);
            // numerically-stable BCE with logits
            let bce = z.max(0.0) - z * label + (1.0 + (-z.abs()).exp()).ln();
            conf_loss += bce as f64;
            gconf[[0, y, x]] = cfg.conf_loss_weight * (p - label) / n;
        }
    }
    total_loss += cfg.conf_loss_weight as f64 * conf_loss / n as f64;

    if !total_loss.is_finite() {
        return Err(BlurefError::Numerical("matcher loss is not finite".into()));
    }
    matcher.backward_cached(&pass, &grad_flow, &gconf);
    Ok(total_loss)
}

/// Train a matcher from scratch on the given pairs. Deterministic given
/// `seed`; aborts with a diagnostic on divergence.
pub fn train_matcher(
    pairs: &[WarpPair],
    arch: MatcherConfig,
    cfg: &MatchTrainConfig,
    seed: u64,
) -> Result<(Matcher, Vec<StepLog>)> {
    if pairs.is_empty() {
        return Err(BlurefError::InvalidInput("empty pair source".into()));
    }
    if pairs.len() < cfg.min_pairs {
        return Err(BlurefError::InvalidInput(format!(
            "pair source yields {} samples, need >= {}",
            pairs.len(),
            cfg.min_pairs
        )));
    }
    let mut matcher = Matcher::new(arch, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_1234_8765);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        matcher.zero_grad();
        let mut loss_sum = 0.0f64;
        for _ in 0..cfg.batch_size {
            let idx = rng.gen_range(0..pairs.len());
            let loss = accumulate_pair(&mut matcher, &pairs[idx], cfg).map_err(|e| {
                BlurefError::Numerical(format!("step {step}: {e}"))
            })?;
            loss_sum += loss;
        }
        let inv_batch = 1.0 / cfg.batch_size as f32;
        for p in matcher.params_mut() {
            p.grad.mapv_inplace(|g| g * inv_batch);
        }
        let lr = cosine_lr(cfg.lr_initial, cfg.lr_final, step as u64, cfg.steps as u64);
        adam_step(&mut matcher.params_mut(), &cfg.adam.clone(), lr as f32, step as u64 + 1);
        log.push(StepLog { step, lr, loss: loss_sum / cfg.batch_size as f64 });
    }
    Ok((matcher, log))
}

/// Mean endpoint error of the matcher over the pairs, inside valid masks.
pub fn evaluate_epe(matcher: &Matcher, pairs: &[WarpPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(BlurefError::InvalidInput("no evaluation pairs".into()));
    }
    let mut total = 0.0f64;
    for pair in pairs {
        let (flow, _) = super::model::infer_flow(matcher, &pair.warped, &pair.gt)?;
        total += flow.endpoint_error(&pair.gt_flow, Some(&pair.valid));
    }
    Ok(total / pairs.len() as f64)
}
