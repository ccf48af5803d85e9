//! Coarse-to-fine correlation matcher with a confidence head.
//!
//! Per pyramid level: shared conv features, L2-normalized per pixel, local
//! correlation in a +/-R window around the (detached, integer) offset
//! upsampled from the coarser level. The level flow is
//! `offset + softargmax(temp * corr) + conv_residual(corr)`. The finest
//! level also emits a sigmoid confidence map.

use ndarray::{Array3, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BlurefError, Result};
use crate::image::{warp_backward, ConfidenceMap, FlowField, Image};
use crate::nn::{avg_pool2, leaky_relu, leaky_relu_backward, sigmoid, Conv2d, Feat, Param};

pub const LRELU_SLOPE: f32 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatcherConfig {
    pub levels: usize,
    pub feat_ch: usize,
    pub hidden_ch: usize,
    pub corr_radius: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self { levels: 3, feat_ch: 16, hidden_ch: 32, corr_radius: 4 }
    }
}

impl MatcherConfig {
    pub fn corr_channels(&self) -> usize {
        let side = 2 * self.corr_radius + 1;
        side * side
    }

    /// Stable architecture fingerprint recorded in checkpoints.
    pub fn arch_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in [self.levels, self.feat_ch, self.hidden_ch, self.corr_radius] {
            h ^= v as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn downsample_factor(&self) -> usize {
        1 << (self.levels - 1)
    }
}

/// Trainable matcher parameters. The architecture hash ties checkpoints to
/// a fixed topology.
#[derive(Debug, Clone)]
pub struct Matcher {
    pub cfg: MatcherConfig,
    pub fe0: Conv2d,
    pub fe1: Conv2d,
    pub fe2: Conv2d,
    pub head0: Conv2d,
    pub head1: Conv2d,
    pub flow_out: Conv2d,
    pub conf_out: Conv2d,
    /// Softargmax temperature (scalar).
    pub temp: Param,
}

impl Matcher {
    pub fn new(cfg: MatcherConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = cfg.feat_ch;
        let h = cfg.hidden_ch;
        let cc = cfg.corr_channels();
        let fe0 = Conv2d::new(1, f, 3, 1, &mut rng);
        let fe1 = Conv2d::new(f, f, 3, 1, &mut rng);
        let fe2 = Conv2d::new(f, f, 3, 1, &mut rng);
        let head0 = Conv2d::new(cc, h, 1, 1, &mut rng);
        let head1 = Conv2d::new(h, h, 3, 1, &mut rng);
        // zero-init outputs: the initial flow is the raw softargmax and the
        // initial confidence is 0.5 everywhere
        let flow_out = Conv2d::zeroed(h, 2, 3, 1);
        let conf_out = Conv2d::zeroed(h, 1, 3, 1);
        let temp = Param::new(ArrayD::from_elem(IxDyn(&[1]), 10.0f32));
        Self { cfg, fe0, fe1, fe2, head0, head1, flow_out, conf_out, temp }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        for conv in [
            &mut self.fe0,
            &mut self.fe1,
            &mut self.fe2,
            &mut self.head0,
            &mut self.head1,
            &mut self.flow_out,
            &mut self.conf_out,
        ] {
            let [w, b] = conv.params_mut();
            v.push(w);
            v.push(b);
        }
        v.push(&mut self.temp);
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        let convs = [&self.fe0, &self.fe1, &self.fe2, &self.head0, &self.head1, &self.flow_out, &self.conf_out];
        convs.iter().map(|c| c.param_count()).sum::<usize>() + 1
    }

    pub fn params_flat(&self) -> Vec<f32> {
        let convs = [&self.fe0, &self.fe1, &self.fe2, &self.head0, &self.head1, &self.flow_out, &self.conf_out];
        let mut out = Vec::with_capacity(self.param_count());
        for c in convs {
            out.extend(c.weight.value.iter());
            out.extend(c.bias.value.iter());
        }
        out.extend(self.temp.value.iter());
        out
    }

    pub fn load_flat(&mut self, data: &[f32]) -> Result<()> {
        if data.len() != self.param_count() {
            return Err(BlurefError::InvalidInput(format!(
                "checkpoint holds {} parameters, architecture needs {}",
                data.len(),
                self.param_count()
            )));
        }
        let mut it = data.iter();
        for p in self.params_mut() {
            for v in p.value.iter_mut() {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }
}

/// Per-image normalization: grayscale, zero mean, unit variance.
pub fn normalize_gray(img: &Image) -> Feat {
    let g = img.to_gray();
    let n = g.data().len() as f32;
    let mean: f32 = g.data().iter().sum::<f32>() / n;
    let var: f32 = g.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let std = var.sqrt().max(1e-6);
    Array3::from_shape_fn((1, g.height(), g.width()), |(_, y, x)| (g.get(y, x, 0) - mean) / std)
}

pub(crate) struct FeatureCache {
    pub input: Feat,
    pub pre0: Feat,
    pub act0: Feat,
    pub pre1: Feat,
    pub act1: Feat,
    /// L2-normalized features.
    pub feat: Feat,
    /// Per-pixel norms before normalization.
    pub norms: ndarray::Array2<f32>,
}

pub(crate) struct LevelCache {
    pub tcache: FeatureCache,
    pub rcache: FeatureCache,
    /// Integer offsets from the coarser level, (2, h, w): [dx, dy].
    pub offset: Array3<i32>,
    pub corr: Feat,
    /// Softmax over displacement bins.
    pub probs: Feat,
    pub head0_pre: Feat,
    pub head0_act: Feat,
    pub head1_pre: Feat,
    pub head1_act: Feat,
    /// Level flow (2, h, w): [dx, dy].
    pub flow: Feat,
}

pub(crate) struct ForwardPass {
    /// Finest first.
    pub levels: Vec<LevelCache>,
    pub conf_logits: Feat,
    pub conf: Feat,
}

impl Matcher {
    fn extract_features(&self, input: &Feat) -> FeatureCache {
        let pre0 = self.fe0.forward(input);
        let act0 = leaky_relu(&pre0, LRELU_SLOPE);
        let pre1 = self.fe1.forward(&act0);
        let act1 = leaky_relu(&pre1, LRELU_SLOPE);
        let pre2 = self.fe2.forward(&act1);
        let (c, h, w) = pre2.dim();
        let mut norms = ndarray::Array2::<f32>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for ci in 0..c {
                    s += pre2[[ci, y, x]] * pre2[[ci, y, x]];
                }
                norms[[y, x]] = s.sqrt() + 1e-6;
            }
        }
        let mut feat = pre2.clone();
        for y in 0..h {
            for x in 0..w {
                let inv = 1.0 / norms[[y, x]];
                for ci in 0..c {
                    feat[[ci, y, x]] *= inv;
                }
            }
        }
        FeatureCache { input: input.clone(), pre0, act0, pre1, act1, feat, norms }
    }

    /// Forward pass on normalized grayscale inputs whose dims are divisible
    /// by `downsample_factor()`. Returns all caches needed for backprop.
    pub(crate) fn forward_cached(&self, target: &Feat, reference: &Feat) -> ForwardPass {
        let levels = self.cfg.levels;
        let radius = self.cfg.corr_radius as i32;
        let side = (2 * radius + 1) as usize;
        let temp = self.temp.value[[0]];

        // image pyramids, index 0 = finest
        let mut tpyr = vec![target.clone()];
        let mut rpyr = vec![reference.clone()];
        for _ in 1..levels {
            tpyr.push(avg_pool2(tpyr.last().unwrap()));
            rpyr.push(avg_pool2(rpyr.last().unwrap()));
        }

        let mut caches: Vec<LevelCache> = Vec::with_capacity(levels);
        let mut coarser_flow: Option<Feat> = None;
        for l in (0..levels).rev() {
            let tcache = self.extract_features(&tpyr[l]);
            let rcache = self.extract_features(&rpyr[l]);
            let (fc, h, w) = tcache.feat.dim();

            let offset = match &coarser_flow {
                None => Array3::<i32>::zeros((2, h, w)),
                Some(cf) => {
                    let mut off = Array3::<i32>::zeros((2, h, w));
                    let (_, ch, cw) = cf.dim();
                    for y in 0..h {
                        for x in 0..w {
                            let cy = (y / 2).min(ch - 1);
                            let cx = (x / 2).min(cw - 1);
                            off[[0, y, x]] = (2.0 * cf[[0, cy, cx]]).round() as i32;
                            off[[1, y, x]] = (2.0 * cf[[1, cy, cx]]).round() as i32;
                        }
                    }
                    off
                }
            };

            // local correlation around the offset; pixel-major feature copies
            // keep the per-pair dot products contiguous
            let hw = h * w;
            let (tpm, rpm) = pixel_major_pair(&tcache.feat, &rcache.feat);
            let mut corr = Array3::<f32>::zeros((side * side, h, w));
            {
                let cs = corr.as_slice_mut().unwrap();
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let ox = offset[[0, y, x]];
                        let oy = offset[[1, y, x]];
                        let tvec = &tpm[i * fc..(i + 1) * fc];
                        let mut d = 0usize;
                        for dy in -radius..=radius {
                            let sy = (y as i32 + oy + dy).clamp(0, h as i32 - 1) as usize;
                            for dx in -radius..=radius {
                                let sx = (x as i32 + ox + dx).clamp(0, w as i32 - 1) as usize;
                                let si = sy * w + sx;
                                let rvec = &rpm[si * fc..(si + 1) * fc];
                                let mut s = 0.0;
                                for (tv, rv) in tvec.iter().zip(rvec) {
                                    s += tv * rv;
                                }
                                cs[d * hw + i] = s;
                                d += 1;
                            }
                        }
                    }
                }
            }

            // softargmax over displacement bins
            let mut probs = Array3::<f32>::zeros((side * side, h, w));
            let mut soft = Array3::<f32>::zeros((2, h, w));
            for y in 0..h {
                for x in 0..w {
                    let mut maxz = f32::NEG_INFINITY;
                    for d in 0..side * side {
                        maxz = maxz.max(temp * corr[[d, y, x]]);
                    }
                    let mut z = 0.0;
                    for d in 0..side * side {
                        let e = (temp * corr[[d, y, x]] - maxz).exp();
                        probs[[d, y, x]] = e;
                        z += e;
                    }
                    let mut ex = 0.0;
                    let mut ey = 0.0;
                    let mut d = 0usize;
                    for dy in -radius..=radius {
                        for dx in -radius..=radius {
                            let p = probs[[d, y, x]] / z;
                            probs[[d, y, x]] = p;
                            ex += p * dx as f32;
                            ey += p * dy as f32;
                            d += 1;
                        }
                    }
                    soft[[0, y, x]] = ex;
                    soft[[1, y, x]] = ey;
                }
            }

            let head0_pre = self.head0.forward(&corr);
            let head0_act = leaky_relu(&head0_pre, LRELU_SLOPE);
            let head1_pre = self.head1.forward(&head0_act);
            let head1_act = leaky_relu(&head1_pre, LRELU_SLOPE);
            let res = self.flow_out.forward(&head1_act);

            let mut flow = Array3::<f32>::zeros((2, h, w));
            for y in 0..h {
                for x in 0..w {
                    flow[[0, y, x]] = offset[[0, y, x]] as f32 + soft[[0, y, x]] + res[[0, y, x]];
                    flow[[1, y, x]] = offset[[1, y, x]] as f32 + soft[[1, y, x]] + res[[1, y, x]];
                }
            }
            coarser_flow = Some(flow.clone());
            caches.push(LevelCache {
                tcache,
                rcache,
                offset,
                corr,
                probs,
                head0_pre,
                head0_act,
                head1_pre,
                head1_act,
                flow,
            });
        }
        caches.reverse(); // finest first

        let conf_logits = self.conf_out.forward(&caches[0].head1_act);
        let conf = conf_logits.mapv(sigmoid);
        ForwardPass { levels: caches, conf_logits, conf }
    }

    /// Backprop given per-level flow gradients (finest first) and the
    /// confidence-logit gradient. Cross-level gradients are cut by design:
    /// the integer offsets are detached.
    pub(crate) fn backward_cached(
        &mut self,
        pass: &ForwardPass,
        grad_flow: &[Feat],
        grad_conf_logits: &Feat,
    ) {
        let radius = self.cfg.corr_radius as i32;
        let temp = self.temp.value[[0]];

        // confidence path shares head1_act of the finest level
        let mut extra_head1_grad: Option<Feat> = Some(self.conf_out.backward(&pass.levels[0].head1_act, grad_conf_logits));

        for (l, cache) in pass.levels.iter().enumerate() {
            let gflow = &grad_flow[l];
            let (_, h, w) = cache.flow.dim();

            // residual path
            let gres = gflow.clone();
            // soft path: d soft / d corr via softmax
            let mut gcorr = Array3::<f32>::zeros(cache.corr.dim());
            let mut gtemp = 0.0f64;
            for y in 0..h {
                for x in 0..w {
                    let gx = gflow[[0, y, x]];
                    let gy = gflow[[1, y, x]];
                    if gx == 0.0 && gy == 0.0 {
                        continue;
                    }
                    // s = sum_d p_d (g . d)
                    let mut s = 0.0f32;
                    let mut d = 0usize;
                    for dy in -radius..=radius {
                        for dx in -radius..=radius {
                            s += cache.probs[[d, y, x]] * (gx * dx as f32 + gy * dy as f32);
                            d += 1;
                        }
                    }
                    let mut d = 0usize;
                    for dy in -radius..=radius {
                        for dx in -radius..=radius {
                            let gd = cache.probs[[d, y, x]] * (gx * dx as f32 + gy * dy as f32 - s);
                            gcorr[[d, y, x]] += gd * temp;
                            gtemp += (gd * cache.corr[[d, y, x]]) as f64;
                            d += 1;
                        }
                    }
                }
            }
            self.temp.grad[[0]] += gtemp as f32;

            // residual conv head; add the confidence branch at the finest level
            let mut ghead1_act = self.flow_out.backward(&cache.head1_act, &gres);
            if l == 0 {
                if let Some(extra) = extra_head1_grad.take() {
                    ghead1_act += &extra;
                }
            }
            let ghead1_pre = leaky_relu_backward(&cache.head1_pre, &ghead1_act, LRELU_SLOPE);
            let ghead0_act = self.head1.backward(&cache.head0_act, &ghead1_pre);
            let ghead0_pre = leaky_relu_backward(&cache.head0_pre, &ghead0_act, LRELU_SLOPE);
            gcorr += &self.head0.backward(&cache.corr, &ghead0_pre);

            // correlation -> features, in pixel-major layout for contiguity
            let (fc, _, _) = cache.tcache.feat.dim();
            let hw = h * w;
            let (tpm, rpm) = pixel_major_pair(&cache.tcache.feat, &cache.rcache.feat);
            let mut gtpm = vec![0.0f32; hw * fc];
            let mut grpm = vec![0.0f32; hw * fc];
            {
                let gcs = gcorr.as_slice().unwrap();
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let ox = cache.offset[[0, y, x]];
                        let oy = cache.offset[[1, y, x]];
                        let mut d = 0usize;
                        for dy in -radius..=radius {
                            let sy = (y as i32 + oy + dy).clamp(0, h as i32 - 1) as usize;
                            for dx in -radius..=radius {
                                let g = gcs[d * hw + i];
                                d += 1;
                                if g == 0.0 {
                                    continue;
                                }
                                let sx = (x as i32 + ox + dx).clamp(0, w as i32 - 1) as usize;
                                let si = sy * w + sx;
                                let tvec = &tpm[i * fc..(i + 1) * fc];
                                let rvec = &rpm[si * fc..(si + 1) * fc];
                                let gt = &mut gtpm[i * fc..(i + 1) * fc];
                                for (gv, rv) in gt.iter_mut().zip(rvec) {
                                    *gv += g * rv;
                                }
                                let gr = &mut grpm[si * fc..(si + 1) * fc];
                                for (gv, tv) in gr.iter_mut().zip(tvec) {
                                    *gv += g * tv;
                                }
                            }
                        }
                    }
                }
            }
            let gtf = from_pixel_major(&gtpm, fc, h, w);
            let grf = from_pixel_major(&grpm, fc, h, w);

            self.backward_features(&cache.tcache, &gtf);
            self.backward_features(&cache.rcache, &grf);
        }
    }

    fn backward_features(&mut self, cache: &FeatureCache, grad_feat: &Feat) {
        let (c, h, w) = cache.feat.dim();
        // L2-normalization backward: g_pre = (g - f_hat (f_hat . g)) / norm
        let mut gpre2 = Array3::<f32>::zeros((c, h, w));
        for y in 0..h {
            for x in 0..w {
                let mut dot = 0.0;
                for ci in 0..c {
                    dot += cache.feat[[ci, y, x]] * grad_feat[[ci, y, x]];
                }
                let inv = 1.0 / cache.norms[[y, x]];
                for ci in 0..c {
                    gpre2[[ci, y, x]] = (grad_feat[[ci, y, x]] - cache.feat[[ci, y, x]] * dot) * inv;
                }
            }
        }
        let gact1 = self.fe2.backward(&cache.act1, &gpre2);
        let gpre1 = leaky_relu_backward(&cache.pre1, &gact1, LRELU_SLOPE);
        let gact0 = self.fe1.backward(&cache.act0, &gpre1);
        let gpre0 = leaky_relu_backward(&cache.pre0, &gact0, LRELU_SLOPE);
        let _ = self.fe0.backward(&cache.input, &gpre0);
    }
}

/// Transpose two (C,H,W) feature maps into pixel-major `(H*W, C)` buffers so
/// correlation dot products run over contiguous memory.
fn pixel_major_pair(a: &Feat, b: &Feat) -> (Vec<f32>, Vec<f32>) {
    let (c, h, w) = a.dim();
    let hw = h * w;
    let asrc = a.as_slice().expect("standard layout");
    let bsrc = b.as_slice().expect("standard layout");
    let mut apm = vec![0.0f32; hw * c];
    let mut bpm = vec![0.0f32; hw * c];
    for ci in 0..c {
        let arow = &asrc[ci * hw..(ci + 1) * hw];
        let brow = &bsrc[ci * hw..(ci + 1) * hw];
        for i in 0..hw {
            apm[i * c + ci] = arow[i];
            bpm[i * c + ci] = brow[i];
        }
    }
    (apm, bpm)
}

fn from_pixel_major(pm: &[f32], c: usize, h: usize, w: usize) -> Feat {
    let hw = h * w;
    let mut out = Array3::<f32>::zeros((c, h, w));
    let dst = out.as_slice_mut().unwrap();
    for i in 0..hw {
        let src = &pm[i * c..(i + 1) * c];
        for (ci, v) in src.iter().enumerate() {
            dst[ci * hw + i] = *v;
        }
    }
    out
}

fn pad_to_multiple(img: &Image, factor: usize) -> (Image, usize, usize) {
    let h = img.height();
    let w = img.width();
    let ph = h.div_ceil(factor) * factor;
    let pw = w.div_ceil(factor) * factor;
    if ph == h && pw == w {
        return (img.clone(), h, w);
    }
    let padded = Image::from_fn(ph, pw, img.channels(), |y, x, c| {
        img.get(y.min(h - 1), x.min(w - 1), c)
    });
    (padded, h, w)
}

/// Run the matcher on an image pair of equal dims: returns the flow from
/// target coordinates into the reference and a confidence map.
pub fn infer_flow(matcher: &Matcher, target: &Image, reference: &Image) -> Result<(FlowField, ConfidenceMap)> {
    if target.height() != reference.height() || target.width() != reference.width() {
        return Err(BlurefError::DimensionMismatch(format!(
            "target {}x{} vs reference {}x{}",
            target.height(),
            target.width(),
            reference.height(),
            reference.width()
        )));
    }
    let factor = matcher.cfg.downsample_factor();
    let (tp, h, w) = pad_to_multiple(target, factor);
    let (rp, _, _) = pad_to_multiple(reference, factor);
    let tn = normalize_gray(&tp);
    let rn = normalize_gray(&rp);
    let pass = matcher.forward_cached(&tn, &rn);
    let flow_feat = &pass.levels[0].flow;
    let flow = FlowField::from_fn(h, w, |y, x| (flow_feat[[0, y, x]], flow_feat[[1, y, x]]));
    let conf_values: Vec<f32> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| pass.conf[[0, y, x]].clamp(0.0, 1.0))
        .collect();
    let conf = ConfidenceMap::new(h, w, conf_values)?;
    Ok((flow, conf))
}

/// The DM contract: warp the sharp reference onto the target geometry and
/// report per-pixel confidence.
pub fn dm_apply(matcher: &Matcher, target: &Image, reference: &Image) -> Result<(Image, ConfidenceMap)> {
    let (flow, conf) = infer_flow(matcher, target, reference)?;
    let trans = warp_backward(reference, &flow)?;
    Ok((trans, conf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(h: usize, w: usize, seed: u64) -> Image {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, 1, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn dm_apply_is_pure() {
        let m = Matcher::new(MatcherConfig::default(), 0);
        let t = noise_image(32, 32, 1);
        let r = noise_image(32, 32, 2);
        let (a_img, a_conf) = dm_apply(&m, &t, &r).unwrap();
        let (b_img, b_conf) = dm_apply(&m, &t, &r).unwrap();
        assert_eq!(a_img, b_img);
        assert_eq!(a_conf, b_conf);
    }

    #[test]
    fn constant_images_do_not_crash_and_conf_in_range() {
        let m = Matcher::new(MatcherConfig::default(), 0);
        let t = Image::constant(32, 32, 1, 0.5);
        let (trans, conf) = dm_apply(&m, &t, &t).unwrap();
        assert!(trans.is_finite());
        assert!(conf.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn dims_not_divisible_by_factor_are_padded() {
        let m = Matcher::new(MatcherConfig::default(), 0);
        let t = noise_image(33, 37, 3);
        let r = noise_image(33, 37, 4);
        let (trans, conf) = dm_apply(&m, &t, &r).unwrap();
        assert_eq!((trans.height(), trans.width()), (33, 37));
        assert_eq!((conf.height(), conf.width()), (33, 37));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let m = Matcher::new(MatcherConfig::default(), 0);
        let t = noise_image(32, 32, 1);
        let r = noise_image(32, 36, 2);
        assert!(dm_apply(&m, &t, &r).is_err());
    }

    #[test]
    fn checkpoint_flat_roundtrip() {
        let m = Matcher::new(MatcherConfig::default(), 5);
        let flat = m.params_flat();
        let mut m2 = Matcher::new(MatcherConfig::default(), 99);
        m2.load_flat(&flat).unwrap();
        assert_eq!(m2.params_flat(), flat);
    }
}
