//! Random dense flow fields from homographies and thin-plate splines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BlurefError, Result};
use crate::image::FlowField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpKind {
    Homography,
    ThinPlateSpline,
}

/// Geometry of a synthetic warp: an oversized field is sampled and later
/// centrally cropped to `crop_height` x `crop_width`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpConfig {
    pub kind: WarpKind,
    /// Corner perturbation as a fraction of min(H', W') (homography).
    pub homography_strength: f32,
    /// Max global translation in pixels, sampled uniformly per axis and added
    /// on top of the homography / TPS deformation. Matching at inference time
    /// mostly sees camera pans of several pixels, so the training distribution
    /// must cover whole-image shifts, not just local deformation.
    #[serde(default = "default_translation_max")]
    pub translation_max: f32,
    /// Control grid side length (thin-plate spline).
    pub tps_grid: usize,
    /// Gaussian displacement sigma in pixels (thin-plate spline).
    pub tps_sigma: f32,
    pub oversize_height: usize,
    pub oversize_width: usize,
    pub crop_height: usize,
    pub crop_width: usize,
}

fn default_translation_max() -> f32 {
    3.0
}

impl Default for WarpConfig {
    fn default() -> Self {
        // toy-scale default: 96x96 oversize, 64x64 crop
        Self {
            kind: WarpKind::Homography,
            homography_strength: 0.03,
            translation_max: default_translation_max(),
            tps_grid: 4,
            tps_sigma: 2.0,
            oversize_height: 96,
            oversize_width: 96,
            crop_height: 64,
            crop_width: 64,
        }
    }
}

impl WarpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.oversize_height <= self.crop_height || self.oversize_width <= self.crop_width {
            return Err(BlurefError::InvalidConfig(
                "oversize dims must strictly exceed crop dims".into(),
            ));
        }
        if self.homography_strength < 0.0 || self.tps_sigma < 0.0 || self.translation_max < 0.0 {
            return Err(BlurefError::InvalidConfig("warp strengths must be >= 0".into()));
        }
        if self.tps_grid < 2 {
            return Err(BlurefError::InvalidConfig("tps grid must be >= 2".into()));
        }
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting; `None` for singular systems.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in (row + 1)..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// 3x3 homography in row-major order with h22 fixed to 1.
#[derive(Debug, Clone, Copy)]
pub struct Homography(pub [f64; 9]);

impl Homography {
    /// Exact homography mapping the four `src` points onto `dst` (DLT, 8x8).
    pub fn fit(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> Option<Self> {
        let mut a = vec![vec![0.0; 8]; 8];
        let mut b = vec![0.0; 8];
        for (i, (&(x, y), &(u, v))) in src.iter().zip(dst.iter()).enumerate() {
            a[2 * i] = vec![x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y];
            b[2 * i] = u;
            a[2 * i + 1] = vec![0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y];
            b[2 * i + 1] = v;
        }
        let h = solve_dense(a, b)?;
        let m = [h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0];
        let hom = Homography(m);
        if hom.det().abs() < 1e-6 {
            return None;
        }
        Some(hom)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w)
    }
}

/// Dense H' x W' flow realizing a randomly sampled homography or TPS warp.
/// Degenerate homographies are resampled internally.
pub fn sample_flow_field(cfg: &WarpConfig, seed: u64) -> Result<FlowField> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match cfg.kind {
        WarpKind::Homography => sample_homography_flow(cfg, &mut rng),
        WarpKind::ThinPlateSpline => sample_tps_flow(cfg, &mut rng),
    }
}

fn sample_homography_flow(cfg: &WarpConfig, rng: &mut ChaCha8Rng) -> Result<FlowField> {
    let h = cfg.oversize_height;
    let w = cfg.oversize_width;
    let max_off = cfg.homography_strength as f64 * h.min(w) as f64;
    let t = cfg.translation_max as f64;
    let (tx, ty) = if t > 0.0 {
        (rng.gen_range(-t..=t), rng.gen_range(-t..=t))
    } else {
        (0.0, 0.0)
    };
    let corners = [
        (0.0, 0.0),
        (w as f64 - 1.0, 0.0),
        (w as f64 - 1.0, h as f64 - 1.0),
        (0.0, h as f64 - 1.0),
    ];
    let hom = loop {
        let mut dst = corners;
        for p in &mut dst {
            if max_off > 0.0 {
                p.0 += rng.gen_range(-max_off..=max_off);
                p.1 += rng.gen_range(-max_off..=max_off);
            }
            p.0 += tx;
            p.1 += ty;
        }
        if let Some(hm) = Homography::fit(&corners, &dst) {
            break hm;
        }
    };
    Ok(FlowField::from_fn(h, w, |y, x| {
        let (u, v) = hom.apply(x as f64, y as f64);
        ((u - x as f64) as f32, (v - y as f64) as f32)
    }))
}

fn tps_kernel(r2: f64) -> f64 {
    if r2 < 1e-12 {
        0.0
    } else {
        r2 * r2.ln() * 0.5
    }
}

fn sample_tps_flow(cfg: &WarpConfig, rng: &mut ChaCha8Rng) -> Result<FlowField> {
    use rand_distr::{Distribution, Normal};
    let h = cfg.oversize_height;
    let w = cfg.oversize_width;
    let k = cfg.tps_grid;
    let normal = Normal::new(0.0f64, cfg.tps_sigma as f64).map_err(|e| {
        BlurefError::InvalidConfig(format!("tps sigma: {e}"))
    })?;

    let mut centers = Vec::with_capacity(k * k);
    for gy in 0..k {
        for gx in 0..k {
            let cx = gx as f64 * (w as f64 - 1.0) / (k as f64 - 1.0);
            let cy = gy as f64 * (h as f64 - 1.0) / (k as f64 - 1.0);
            centers.push((cx, cy));
        }
    }
    let disp: Vec<(f64, f64)> = (0..k * k)
        .map(|_| {
            if cfg.tps_sigma == 0.0 {
                (0.0, 0.0)
            } else {
                (normal.sample(rng), normal.sample(rng))
            }
        })
        .collect();

    // Standard TPS system [[K P],[P^T 0]]; one solve per displacement axis.
    let n = k * k;
    let m = n + 3;
    let mut weights = Vec::new();
    for axis in 0..2 {
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for i in 0..n {
            for j in 0..n {
                let dx = centers[i].0 - centers[j].0;
                let dy = centers[i].1 - centers[j].1;
                a[i][j] = tps_kernel(dx * dx + dy * dy);
            }
            a[i][n] = 1.0;
            a[i][n + 1] = centers[i].0;
            a[i][n + 2] = centers[i].1;
            a[n][i] = 1.0;
            a[n + 1][i] = centers[i].0;
            a[n + 2][i] = centers[i].1;
            b[i] = if axis == 0 { disp[i].0 } else { disp[i].1 };
        }
        let sol = solve_dense(a, b)
            .ok_or_else(|| BlurefError::Numerical("singular TPS system".into()))?;
        weights.push(sol);
    }

    let eval = |sol: &[f64], x: f64, y: f64| -> f64 {
        let mut v = sol[n] + sol[n + 1] * x + sol[n + 2] * y;
        for (i, &(cx, cy)) in centers.iter().enumerate() {
            let dx = x - cx;
            let dy = y - cy;
            v += sol[i] * tps_kernel(dx * dx + dy * dy);
        }
        v
    };
    Ok(FlowField::from_fn(h, w, |y, x| {
        let (xf, yf) = (x as f64, y as f64);
        (eval(&weights[0], xf, yf) as f32, eval(&weights[1], xf, yf) as f32)
    }))
}
