//! Deterministic toy video synthesis and frame-averaged blur.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BlurefError, Result};
use crate::image::Image;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub cx: f32,
    pub cy: f32,
    pub vx: f32,
    pub vy: f32,
    pub radius: f32,
    pub color: [f32; 3],
    pub phase: f32,
}

impl SpriteSpec {
    pub fn center_at(&self, t: usize) -> (f32, f32) {
        (self.cx + t as f32 * self.vx, self.cy + t as f32 * self.vy)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyVideoConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub n_sprites: usize,
    pub sprite_radius: (f32, f32),
    /// Per-frame sprite speed magnitude range in pixels.
    pub sprite_speed: (f32, f32),
    /// Per-frame camera pan magnitude in pixels (fixed random direction).
    pub camera_speed: f32,
    /// Camera shake amplitude in pixels. The camera oscillates sinusoidally
    /// along a random direction on top of the linear pan, so a multi-frame
    /// average picks up a long smear path while the net displacement between
    /// any two nearby frames stays bounded by twice this amplitude.
    #[serde(default)]
    pub camera_shake_amp: f32,
    /// Shake oscillation period in frames.
    #[serde(default = "default_shake_period")]
    pub camera_shake_period: f32,
    /// Amplitude of the value-noise background texture in [0,1].
    pub background_contrast: f32,
}

fn default_shake_period() -> f32 {
    5.0
}

impl Default for ToyVideoConfig {
    fn default() -> Self {
        Self {
            height: 96,
            width: 96,
            frames: 48,
            n_sprites: 5,
            sprite_radius: (6.0, 14.0),
            sprite_speed: (0.3, 1.0),
            camera_speed: 0.5,
            camera_shake_amp: 0.0,
            camera_shake_period: default_shake_period(),
            background_contrast: 0.7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyVideo {
    pub frames: Vec<Image>,
    pub sprites: Vec<SpriteSpec>,
    pub camera_velocity: (f32, f32),
}

// integer lattice hash -> [0,1), stable across platforms
fn lattice_hash(seed: u64, octave: u32, c: u32, ix: i64, iy: i64) -> f32 {
    let mut h = seed
        ^ (octave as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (c as u64).wrapping_mul(0xC2B2AE3D27D4EB4F)
        ^ (ix as u64).wrapping_mul(0xD6E8FEB86659FD93)
        ^ (iy as u64).wrapping_mul(0xA0761D6478BD642F);
    h ^= h >> 32;
    h = h.wrapping_mul(0xE7037ED1A0B428DB);
    h ^= h >> 29;
    h = h.wrapping_mul(0x94D049BB133111EB);
    h ^= h >> 32;
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn value_noise(seed: u64, octave: u32, c: u32, x: f32, y: f32, cell: f32) -> f32 {
    let gx = x / cell;
    let gy = y / cell;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let fx = gx - x0;
    let fy = gy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let v00 = lattice_hash(seed, octave, c, x0, y0);
    let v01 = lattice_hash(seed, octave, c, x0 + 1, y0);
    let v10 = lattice_hash(seed, octave, c, x0, y0 + 1);
    let v11 = lattice_hash(seed, octave, c, x0 + 1, y0 + 1);
    let top = v00 + fx * (v01 - v00);
    let bot = v10 + fx * (v11 - v10);
    top + fy * (bot - top)
}

fn background(seed: u64, c: u32, x: f32, y: f32, contrast: f32) -> f32 {
    // Large sharp-edged regions (thresholded coarse noise) plus two octaves
    // of milder texture. Sharp region boundaries are where motion blur does
    // its damage — a multi-pixel smear band per edge — while an aligned
    // sharp frame misplaces the same edge by well under a pixel, so the
    // contrast between blurred and warped-sharp content is maximal.
    let coarse = value_noise(seed, 0, c, x, y, 16.0);
    let region = 0.5 + 0.5 * ((coarse - 0.5) * 40.0).tanh();
    let n = 0.55 * region
        + 0.25 * value_noise(seed, 1, c, x, y, 7.0)
        + 0.20 * value_noise(seed, 2, c, x, y, 3.0);
    0.5 + contrast * (n - 0.5)
}

/// Textured moving scene: drifting patterned sprites over a panning
/// value-noise background. Bit-identical for equal `(cfg, scene_seed)`.
pub fn synthesize_toy_video(cfg: &ToyVideoConfig, scene_seed: u64) -> Result<ToyVideo> {
    if cfg.frames < 8 {
        return Err(BlurefError::InvalidConfig(format!(
            "toy video needs >= 8 frames, got {}",
            cfg.frames
        )));
    }
    if cfg.camera_shake_amp < 0.0 || cfg.camera_shake_period <= 0.0 {
        return Err(BlurefError::InvalidConfig(
            "camera shake amplitude must be >= 0 and period > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    let cam_angle = rng.gen_range(0.0..std::f32::consts::TAU);
    let camera_velocity = (cfg.camera_speed * cam_angle.cos(), cfg.camera_speed * cam_angle.sin());
    let shake_angle = rng.gen_range(0.0..std::f32::consts::TAU);
    let shake_phase = rng.gen_range(0.0..std::f32::consts::TAU);
    let shake_dir = (shake_angle.cos(), shake_angle.sin());
    let cam_pos = |t: usize| -> (f32, f32) {
        let t = t as f32;
        let s = cfg.camera_shake_amp
            * (std::f32::consts::TAU * t / cfg.camera_shake_period + shake_phase).sin();
        (t * camera_velocity.0 + s * shake_dir.0, t * camera_velocity.1 + s * shake_dir.1)
    };

    let sprites: Vec<SpriteSpec> = (0..cfg.n_sprites)
        .map(|_| {
            let speed = rng.gen_range(cfg.sprite_speed.0..=cfg.sprite_speed.1);
            let dir = rng.gen_range(0.0..std::f32::consts::TAU);
            SpriteSpec {
                cx: rng.gen_range(0.2..0.8) * cfg.width as f32,
                cy: rng.gen_range(0.2..0.8) * cfg.height as f32,
                vx: speed * dir.cos(),
                vy: speed * dir.sin(),
                radius: rng.gen_range(cfg.sprite_radius.0..=cfg.sprite_radius.1),
                color: [rng.gen_range(0.1..0.95), rng.gen_range(0.1..0.95), rng.gen_range(0.1..0.95)],
                phase: rng.gen_range(0.0..std::f32::consts::TAU),
            }
        })
        .collect();

    let wrap_w = cfg.width as f32 + 4.0 * cfg.sprite_radius.1;
    let wrap_h = cfg.height as f32 + 4.0 * cfg.sprite_radius.1;
    let frames = (0..cfg.frames)
        .map(|t| {
            Image::from_fn(cfg.height, cfg.width, 3, |y, x, c| {
                let (cx, cy) = cam_pos(t);
                let wx = x as f32 + cx;
                let wy = y as f32 + cy;
                let mut v = background(scene_seed, c as u32, wx, wy, cfg.background_contrast);
                for s in &sprites {
                    let (mut sx, mut sy) = s.center_at(t);
                    sx = (sx.rem_euclid(wrap_w)) - 2.0 * cfg.sprite_radius.1;
                    sy = (sy.rem_euclid(wrap_h)) - 2.0 * cfg.sprite_radius.1;
                    let dx = x as f32 - sx;
                    let dy = y as f32 - sy;
                    let dist = (dx * dx + dy * dy).sqrt();
                    let alpha = (s.radius - dist).clamp(0.0, 1.0);
                    if alpha > 0.0 {
                        let pattern =
                            0.75 + 0.25 * (0.9 * dx + s.phase).sin() * (0.8 * dy + s.phase).cos();
                        v = v * (1.0 - alpha) + s.color[c] * pattern * alpha;
                    }
                }
                v.clamp(0.0, 1.0)
            })
        })
        .collect();

    Ok(ToyVideo { frames, sprites, camera_velocity })
}

/// Pixel-wise mean of `window` consecutive frames centered at `center`.
pub fn synthesize_blur(frames: &[Image], center: usize, window: usize) -> Result<Image> {
    if window % 2 == 0 {
        return Err(BlurefError::InvalidInput("blur window must be odd".into()));
    }
    let half = window / 2;
    if center < half || center + half >= frames.len() {
        return Err(BlurefError::InvalidInput(format!(
            "window {window} at frame {center} exceeds the {} available frames",
            frames.len()
        )));
    }
    let first = &frames[center - half];
    let mut acc = vec![0.0f64; first.data().len()];
    for f in &frames[center - half..=center + half] {
        if !f.same_dims(first) {
            return Err(BlurefError::DimensionMismatch("frames differ in size".into()));
        }
        for (a, &v) in acc.iter_mut().zip(f.data()) {
            *a += v as f64;
        }
    }
    let inv = 1.0 / window as f64;
    let data = acc.into_iter().map(|v| (v * inv) as f32).collect();
    Image::new(first.height(), first.width(), first.channels(), data)
}
