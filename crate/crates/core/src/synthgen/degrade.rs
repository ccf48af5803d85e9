//! Blind degradation pipeline: blur, noise, JPEG, resampling, shuffle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{BlurefError, Result};
use crate::image::Image;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlurCfg {
    /// Candidate odd kernel sizes.
    pub kernel_sizes: Vec<usize>,
    pub sigma_range: (f32, f32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisoBlurCfg {
    /// Per-axis sigma range for the elliptical Gaussian kernel.
    pub sigma_range: (f32, f32),
    pub kernel_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionBlurCfg {
    pub length_range: (usize, usize),
    /// Radians.
    pub angle_range: (f32, f32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCfg {
    pub sigma_range: (f32, f32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JpegCfg {
    pub quality_range: (f32, f32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleCfg {
    /// Downscale factor range; the image is scaled down and back up.
    pub scale_range: (f32, f32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainCfg {
    /// Global intensity multiplier range. Matching inputs built from
    /// partially masked images arrive dimmed, so the matcher must tolerate
    /// brightness loss between the two frames.
    pub gain_range: (f32, f32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EraseCfg {
    /// Number of rectangles blacked out per image.
    pub count_range: (usize, usize),
    /// Rectangle side length as a fraction of the image side.
    pub size_frac_range: (f32, f32),
}

/// Which degradation stages are enabled and with what parameter ranges.
/// Stage order is the declaration order below unless `shuffle` is set, in
/// which case each enabled stage is kept with probability 0.5 and the
/// surviving stages are applied in a uniformly random order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationConfig {
    pub gaussian_blur: Option<GaussianBlurCfg>,
    pub aniso_blur: Option<AnisoBlurCfg>,
    pub motion_blur: Option<MotionBlurCfg>,
    pub gaussian_noise: Option<NoiseCfg>,
    pub jpeg: Option<JpegCfg>,
    pub resample: Option<ResampleCfg>,
    pub gain: Option<GainCfg>,
    pub erase: Option<EraseCfg>,
    pub shuffle: bool,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            gaussian_blur: Some(GaussianBlurCfg { kernel_sizes: vec![7, 9, 11], sigma_range: (0.5, 2.5) }),
            aniso_blur: Some(AnisoBlurCfg { sigma_range: (0.5, 3.0), kernel_size: 11 }),
            motion_blur: Some(MotionBlurCfg { length_range: (3, 9), angle_range: (0.0, std::f32::consts::PI) }),
            gaussian_noise: Some(NoiseCfg { sigma_range: (0.0, 0.03) }),
            jpeg: Some(JpegCfg { quality_range: (30.0, 60.0) }),
            resample: Some(ResampleCfg { scale_range: (0.5, 1.0) }),
            // gain/erase are opt-in: they simulate the dimmed and blacked-out
            // inputs of the literal progressive variant but measurably hurt
            // flow accuracy on ordinary inputs when enabled by default
            gain: None,
            erase: None,
            shuffle: true,
        }
    }
}

impl DegradationConfig {
    pub fn disabled() -> Self {
        Self {
            gaussian_blur: None,
            aniso_blur: None,
            motion_blur: None,
            gaussian_noise: None,
            jpeg: None,
            resample: None,
            gain: None,
            erase: None,
            shuffle: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.gaussian_blur {
            if g.kernel_sizes.is_empty() || g.kernel_sizes.iter().any(|k| k % 2 == 0) {
                return Err(BlurefError::InvalidConfig("gaussian kernel sizes must be odd and non-empty".into()));
            }
            check_range(g.sigma_range, "gaussian sigma")?;
        }
        if let Some(a) = &self.aniso_blur {
            if a.kernel_size % 2 == 0 {
                return Err(BlurefError::InvalidConfig("aniso kernel size must be odd".into()));
            }
            check_range(a.sigma_range, "aniso sigma")?;
        }
        if let Some(m) = &self.motion_blur {
            if m.length_range.0 < 1 || m.length_range.0 > m.length_range.1 {
                return Err(BlurefError::InvalidConfig("motion length range empty or < 1".into()));
            }
        }
        if let Some(n) = &self.gaussian_noise {
            check_range(n.sigma_range, "noise sigma")?;
        }
        if let Some(j) = &self.jpeg {
            check_range(j.quality_range, "jpeg quality")?;
        }
        if let Some(r) = &self.resample {
            check_range(r.scale_range, "resample scale")?;
            if r.scale_range.0 <= 0.0 {
                return Err(BlurefError::InvalidConfig("resample scale must be positive".into()));
            }
        }
        if let Some(g) = &self.gain {
            check_range(g.gain_range, "gain")?;
            if g.gain_range.0 <= 0.0 {
                return Err(BlurefError::InvalidConfig("gain must be positive".into()));
            }
        }
        if let Some(e) = &self.erase {
            if e.count_range.0 > e.count_range.1 {
                return Err(BlurefError::InvalidConfig("erase count range is empty".into()));
            }
            check_range(e.size_frac_range, "erase size fraction")?;
            if e.size_frac_range.0 <= 0.0 || e.size_frac_range.1 >= 1.0 {
                return Err(BlurefError::InvalidConfig("erase size fraction must be in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

fn check_range(r: (f32, f32), name: &str) -> Result<()> {
    if r.0 > r.1 {
        return Err(BlurefError::InvalidConfig(format!("{name} range is empty")));
    }
    Ok(())
}

/// One concrete stage with all random parameters already drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum DegradationStage {
    GaussianBlur { kernel: usize, sigma: f32 },
    AnisoBlur { kernel: usize, sigma_x: f32, sigma_y: f32, theta: f32 },
    MotionBlur { length: usize, angle: f32 },
    GaussianNoise { sigma: f32, seed: u64 },
    Jpeg { quality: f32 },
    Resample { scale: f32, bicubic: bool },
    Gain { gain: f32 },
    Erase { count: usize, size_frac_range: (f32, f32), seed: u64 },
}

/// A fully-resolved degradation plan; applying it is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationPlan {
    pub stages: Vec<DegradationStage>,
}

/// Draw a concrete plan from the config. Deterministic given the RNG state.
pub fn sample_plan(cfg: &DegradationConfig, rng: &mut ChaCha8Rng) -> Result<DegradationPlan> {
    cfg.validate()?;
    let mut stages = Vec::new();
    if let Some(g) = &cfg.gaussian_blur {
        let kernel = g.kernel_sizes[rng.gen_range(0..g.kernel_sizes.len())];
        let sigma = draw(rng, g.sigma_range);
        stages.push(DegradationStage::GaussianBlur { kernel, sigma });
    }
    if let Some(a) = &cfg.aniso_blur {
        stages.push(DegradationStage::AnisoBlur {
            kernel: a.kernel_size,
            sigma_x: draw(rng, a.sigma_range),
            sigma_y: draw(rng, a.sigma_range),
            theta: rng.gen_range(0.0..std::f32::consts::PI),
        });
    }
    if let Some(m) = &cfg.motion_blur {
        stages.push(DegradationStage::MotionBlur {
            length: rng.gen_range(m.length_range.0..=m.length_range.1),
            angle: draw(rng, m.angle_range),
        });
    }
    if let Some(n) = &cfg.gaussian_noise {
        stages.push(DegradationStage::GaussianNoise { sigma: draw(rng, n.sigma_range), seed: rng.gen() });
    }
    if let Some(j) = &cfg.jpeg {
        stages.push(DegradationStage::Jpeg { quality: draw(rng, j.quality_range) });
    }
    if let Some(r) = &cfg.resample {
        stages.push(DegradationStage::Resample { scale: draw(rng, r.scale_range), bicubic: rng.gen() });
    }
    if let Some(g) = &cfg.gain {
        stages.push(DegradationStage::Gain { gain: draw(rng, g.gain_range) });
    }
    if let Some(e) = &cfg.erase {
        stages.push(DegradationStage::Erase {
            count: rng.gen_range(e.count_range.0..=e.count_range.1),
            size_frac_range: e.size_frac_range,
            seed: rng.gen(),
        });
    }
    if cfg.shuffle {
        stages.retain(|_| rng.gen_bool(0.5));
        stages.shuffle(rng);
    }
    Ok(DegradationPlan { stages })
}

fn draw(rng: &mut ChaCha8Rng, range: (f32, f32)) -> f32 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

/// Apply the enabled degradation stages; output clipped to [0, 1].
pub fn degrade(img: &Image, cfg: &DegradationConfig, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = sample_plan(cfg, &mut rng)?;
    Ok(apply_plan(img, &plan))
}

pub fn apply_plan(img: &Image, plan: &DegradationPlan) -> Image {
    let mut out = img.clone();
    for stage in &plan.stages {
        out = apply_stage(&out, stage);
    }
    out.clamp01();
    out
}

fn apply_stage(img: &Image, stage: &DegradationStage) -> Image {
    match *stage {
        DegradationStage::GaussianBlur { kernel, sigma } => {
            let k = gaussian_kernel_1d(kernel, sigma);
            convolve_separable(img, &k)
        }
        DegradationStage::AnisoBlur { kernel, sigma_x, sigma_y, theta } => {
            let k = aniso_gaussian_kernel(kernel, sigma_x, sigma_y, theta);
            convolve2d(img, &k, kernel)
        }
        DegradationStage::MotionBlur { length, angle } => {
            let (k, size) = motion_blur_kernel(length, angle).expect("length >= 1 checked at config time");
            convolve2d(img, &k, size)
        }
        DegradationStage::GaussianNoise { sigma, seed } => add_gaussian_noise(img, sigma, seed),
        DegradationStage::Jpeg { quality } => jpeg_roundtrip(img, quality.round().clamp(1.0, 100.0) as u8),
        DegradationStage::Resample { scale, bicubic } => resample(img, scale, bicubic),
        DegradationStage::Gain { gain } => {
            let mut out = img.clone();
            for v in out.data_mut() {
                *v = (*v * gain).clamp(0.0, 1.0);
            }
            out
        }
        DegradationStage::Erase { count, size_frac_range, seed } => erase_rects(img, count, size_frac_range, seed),
    }
}

/// Black out `count` random rectangles; simulates the masked-out regions a
/// matcher sees when its input is a partially reconstructed image.
fn erase_rects(img: &Image, count: usize, size_frac_range: (f32, f32), seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let (h, w, c) = (img.height(), img.width(), img.channels());
    for _ in 0..count {
        let rh = ((draw(&mut rng, size_frac_range) * h as f32) as usize).clamp(1, h);
        let rw = ((draw(&mut rng, size_frac_range) * w as f32) as usize).clamp(1, w);
        let y0 = rng.gen_range(0..=h - rh);
        let x0 = rng.gen_range(0..=w - rw);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                for ch in 0..c {
                    out.set(y, x, ch, 0.0);
                }
            }
        }
    }
    out
}

/// 1D normalized Gaussian taps.
fn gaussian_kernel_1d(size: usize, sigma: f32) -> Vec<f32> {
    let half = (size / 2) as isize;
    let s = sigma.max(1e-3);
    let mut k: Vec<f32> = (-half..=half)
        .map(|i| (-(i * i) as f32 / (2.0 * s * s)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Elliptical Gaussian kernel with orientation `theta`, normalized.
fn aniso_gaussian_kernel(size: usize, sigma_x: f32, sigma_y: f32, theta: f32) -> Vec<f32> {
    let half = (size / 2) as isize;
    let (sin, cos) = theta.sin_cos();
    let sx = sigma_x.max(1e-3);
    let sy = sigma_y.max(1e-3);
    let mut k = Vec::with_capacity(size * size);
    for y in -half..=half {
        for x in -half..=half {
            let u = cos * x as f32 + sin * y as f32;
            let v = -sin * x as f32 + cos * y as f32;
            k.push((-(u * u) / (2.0 * sx * sx) - (v * v) / (2.0 * sy * sy)).exp());
        }
    }
    let sum: f32 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Discretized line-segment averaging kernel of the given length and angle.
/// Returns the row-major kernel and its (odd) side length. The kernel is
/// nonnegative and sums to 1.
pub fn motion_blur_kernel(length: usize, angle: f32) -> Result<(Vec<f32>, usize)> {
    if length == 0 {
        return Err(BlurefError::InvalidInput("motion blur length must be >= 1".into()));
    }
    let size = if length % 2 == 1 { length } else { length + 1 };
    let half = (size / 2) as f32;
    let center = half;
    let mut k = vec![0.0f32; size * size];
    let (sin, cos) = angle.sin_cos();
    let w = 1.0 / length as f32;
    for i in 0..length {
        let t = i as f32 - (length as f32 - 1.0) / 2.0;
        let px = center + t * cos;
        let py = center + t * sin;
        // bilinear deposit
        let x0 = px.floor() as isize;
        let y0 = py.floor() as isize;
        let fx = px - x0 as f32;
        let fy = py - y0 as f32;
        for (dy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0isize, 1.0 - fx), (1, fx)] {
                let xx = x0 + dx;
                let yy = y0 + dy;
                if xx >= 0 && yy >= 0 && (xx as usize) < size && (yy as usize) < size {
                    k[yy as usize * size + xx as usize] += w * wy * wx;
                }
            }
        }
    }
    // deposits can clip at the border for long diagonals; renormalize
    let sum: f32 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    Ok((k, size))
}

/// 2D convolution with replicate border padding (constants stay constant).
fn convolve2d(img: &Image, kernel: &[f32], size: usize) -> Image {
    let half = (size / 2) as isize;
    let h = img.height() as isize;
    let w = img.width() as isize;
    Image::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        let mut acc = 0.0;
        let mut ki = 0;
        for ky in -half..=half {
            let yy = (y as isize + ky).clamp(0, h - 1) as usize;
            for kx in -half..=half {
                let xx = (x as isize + kx).clamp(0, w - 1) as usize;
                acc += kernel[ki] * img.get(yy, xx, c);
                ki += 1;
            }
        }
        acc
    })
}

fn convolve_separable(img: &Image, taps: &[f32]) -> Image {
    let half = (taps.len() / 2) as isize;
    let h = img.height() as isize;
    let w = img.width() as isize;
    let horizontal = Image::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        let mut acc = 0.0;
        for (i, &t) in taps.iter().enumerate() {
            let xx = (x as isize + i as isize - half).clamp(0, w - 1) as usize;
            acc += t * img.get(y, xx, c);
        }
        acc
    });
    Image::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        let mut acc = 0.0;
        for (i, &t) in taps.iter().enumerate() {
            let yy = (y as isize + i as isize - half).clamp(0, h - 1) as usize;
            acc += t * horizontal.get(yy, x, c);
        }
        acc
    })
}

fn add_gaussian_noise(img: &Image, sigma: f32, seed: u64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, sigma).unwrap();
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    out
}

fn jpeg_roundtrip(img: &Image, quality: u8) -> Image {
    let h = img.height() as u32;
    let w = img.width() as u32;
    let bytes: Vec<u8> = img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let dynimg = match img.channels() {
        1 => image::DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).unwrap()),
        _ => image::DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).unwrap()),
    };
    let mut buf = Vec::new();
    let mut enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut buf, quality);
    enc.encode_image(&dynimg).expect("in-memory jpeg encode");
    let decoded = image::load_from_memory_with_format(&buf, image::ImageFormat::Jpeg)
        .expect("in-memory jpeg decode");
    match img.channels() {
        1 => {
            let g = decoded.to_luma8();
            Image::new(
                img.height(),
                img.width(),
                1,
                g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
            )
            .unwrap()
        }
        _ => {
            let rgb = decoded.to_rgb8();
            Image::new(
                img.height(),
                img.width(),
                3,
                rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
            )
            .unwrap()
        }
    }
}

fn resample(img: &Image, scale: f32, bicubic: bool) -> Image {
    let h = ((img.height() as f32 * scale).round() as usize).max(4);
    let w = ((img.width() as f32 * scale).round() as usize).max(4);
    let down = if bicubic { img.resize_bicubic(h, w) } else { img.resize_bilinear(h, w) };
    if bicubic {
        down.resize_bicubic(img.height(), img.width())
    } else {
        down.resize_bilinear(img.height(), img.width())
    }
}
