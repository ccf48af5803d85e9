//! Small residual encoder-decoder restoration network.
//!
//! Six convolution stages with one 2x downsampling level and a global
//! residual connection: `output = clamp(input + residual, 0, 1)`. The final
//! conv is zero-initialized so the untrained network is the identity.

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BlurefError, Result};
use crate::image::Image;
use crate::nn::{
    leaky_relu, leaky_relu_backward, upsample_nearest2, upsample_nearest2_backward, Conv2d, Feat,
    Param,
};

const LRELU_SLOPE: f32 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeblurConfig {
    pub channels: usize,
    pub width: usize,
}

impl Default for DeblurConfig {
    fn default() -> Self {
        Self { channels: 3, width: 16 }
    }
}

impl DeblurConfig {
    /// Half-width preset for cheap retraining experiments.
    pub fn lightweight() -> Self {
        Self { channels: 3, width: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.width == 0 {
            return Err(BlurefError::InvalidConfig("deblur channels and width must be positive".into()));
        }
        Ok(())
    }

    pub fn arch_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in [self.channels, self.width] {
            h ^= v as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// Restoration network parameters (encoder, bottleneck, decoder, residual out).
#[derive(Debug, Clone)]
pub struct DeblurNet {
    pub cfg: DeblurConfig,
    pub enc0: Conv2d,
    pub enc1: Conv2d,
    pub mid0: Conv2d,
    pub mid1: Conv2d,
    pub dec0: Conv2d,
    pub out: Conv2d,
}

pub(crate) struct DeblurCache {
    pub input: Feat,
    pub pre_e0: Feat,
    pub act_e0: Feat,
    pub pre_e1: Feat,
    pub act_e1: Feat,
    pub pre_m0: Feat,
    pub act_m0: Feat,
    pub pre_m1: Feat,
    pub up: Feat,
    pub pre_d0: Feat,
    pub act_d0: Feat,
    /// input + residual before clipping.
    pub pre_clip: Feat,
    pub output: Feat,
}

impl DeblurNet {
    pub fn new(cfg: DeblurConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let w = cfg.width;
        let enc0 = Conv2d::new(c, w, 3, 1, &mut rng);
        let enc1 = Conv2d::new(w, 2 * w, 3, 2, &mut rng);
        let mid0 = Conv2d::new(2 * w, 2 * w, 3, 1, &mut rng);
        let mid1 = Conv2d::new(2 * w, 2 * w, 3, 1, &mut rng);
        let dec0 = Conv2d::new(2 * w, w, 3, 1, &mut rng);
        // zero residual at initialization: the untrained net is the identity
        let out = Conv2d::zeroed(w, c, 3, 1);
        Self { cfg, enc0, enc1, mid0, mid1, dec0, out }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for conv in [&mut self.enc0, &mut self.enc1, &mut self.mid0, &mut self.mid1, &mut self.dec0, &mut self.out] {
            let [w, b] = conv.params_mut();
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        [&self.enc0, &self.enc1, &self.mid0, &self.mid1, &self.dec0, &self.out]
            .iter()
            .map(|c| c.param_count())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        for c in [&self.enc0, &self.enc1, &self.mid0, &self.mid1, &self.dec0, &self.out] {
            out.extend(c.weight.value.iter());
            out.extend(c.bias.value.iter());
        }
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

    /// Forward on a (C, H, W) feature with even H and W; caches everything
    /// needed for backprop.
    pub(crate) fn forward_cached(&self, input: &Feat) -> DeblurCache {
        let pre_e0 = self.enc0.forward(input);
        let act_e0 = leaky_relu(&pre_e0, LRELU_SLOPE);
        let pre_e1 = self.enc1.forward(&act_e0);
        let act_e1 = leaky_relu(&pre_e1, LRELU_SLOPE);
        let pre_m0 = self.mid0.forward(&act_e1);
        let act_m0 = leaky_relu(&pre_m0, LRELU_SLOPE);
        let pre_m1 = self.mid1.forward(&act_m0);
        let act_m1 = leaky_relu(&pre_m1, LRELU_SLOPE);
        let up = upsample_nearest2(&act_m1);
        let pre_d0 = self.dec0.forward(&up);
        let act_d0 = leaky_relu(&pre_d0, LRELU_SLOPE);
        let res = self.out.forward(&act_d0);
        let pre_clip = input + &res;
        let output = pre_clip.mapv(|v| v.clamp(0.0, 1.0));
        DeblurCache {
            input: input.clone(),
            pre_e0,
            act_e0,
            pre_e1,
            act_e1,
            pre_m0,
            act_m0,
            pre_m1,
            up,
            pre_d0,
            act_d0,
            pre_clip,
            output,
        }
    }

    /// Accumulates parameter gradients for `d loss / d output`. The clip is
    /// treated as a hard gate: gradients vanish where the pre-clip value
    /// left [0,1].
    pub(crate) fn backward_cached(&mut self, cache: &DeblurCache, grad_out: &Feat) {
        let mut gres = grad_out.clone();
        gres.zip_mut_with(&cache.pre_clip, |g, &v| {
            if !(0.0..=1.0).contains(&v) {
                *g = 0.0;
            }
        });
        let gact_d0 = self.out.backward(&cache.act_d0, &gres);
        let gpre_d0 = leaky_relu_backward(&cache.pre_d0, &gact_d0, LRELU_SLOPE);
        let gup = self.dec0.backward(&cache.up, &gpre_d0);
        let gact_m1 = upsample_nearest2_backward(&gup);
        let gpre_m1 = leaky_relu_backward(&cache.pre_m1, &gact_m1, LRELU_SLOPE);
        let gact_m0 = self.mid1.backward(&cache.act_m0, &gpre_m1);
        let gpre_m0 = leaky_relu_backward(&cache.pre_m0, &gact_m0, LRELU_SLOPE);
        let gact_e1 = self.mid0.backward(&cache.act_e1, &gpre_m0);
        let gpre_e1 = leaky_relu_backward(&cache.pre_e1, &gact_e1, LRELU_SLOPE);
        let gact_e0 = self.enc1.backward(&cache.act_e0, &gpre_e1);
        let gpre_e0 = leaky_relu_backward(&cache.pre_e0, &gact_e0, LRELU_SLOPE);
        let _ = self.enc0.backward(&cache.input, &gpre_e0);
    }
}

/// HWC image -> CHW feature.
pub(crate) fn image_to_feat(img: &Image) -> Feat {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    Array3::from_shape_fn((c, h, w), |(ci, y, x)| img.get(y, x, ci))
}

/// CHW feature -> HWC image (values clamped to [0,1]).
pub(crate) fn feat_to_image(f: &Feat) -> Image {
    let (c, h, w) = f.dim();
    Image::from_fn(h, w, c, |y, x, ci| f[[ci, y, x]].clamp(0.0, 1.0))
}

/// Single-pass inference: pads odd dims (replicate), runs the network, crops
/// back. Output matches the input dims with values in [0,1].
pub fn deblur(net: &DeblurNet, blur: &Image) -> Result<Image> {
    if blur.channels() != net.cfg.channels {
        return Err(BlurefError::DimensionMismatch(format!(
            "network expects {} channels, image has {}",
            net.cfg.channels,
            blur.channels()
        )));
    }
    let h = blur.height();
    let w = blur.width();
    let ph = h.div_ceil(2) * 2;
    let pw = w.div_ceil(2) * 2;
    let padded = if ph == h && pw == w {
        blur.clone()
    } else {
        Image::from_fn(ph, pw, blur.channels(), |y, x, c| blur.get(y.min(h - 1), x.min(w - 1), c))
    };
    let cache = net.forward_cached(&image_to_feat(&padded));
    let full = feat_to_image(&cache.output);
    if ph == h && pw == w {
        Ok(full)
    } else {
        full.crop(0, 0, h, w)
    }
}
