//! Minimal CPU training kit: conv layers, activations, Adam, lr schedule.
//!
//! Everything is f32, single-threaded and deterministic. Feature maps are
//! `Array3<f32>` in (C, H, W) layout; batching is a loop over samples with
//! gradient accumulation.

mod conv;
mod ops;

pub use conv::Conv2d;
pub use ops::{avg_pool2, leaky_relu, leaky_relu_backward, sigmoid, upsample_nearest2, upsample_nearest2_backward};

use ndarray::{Array3, ArrayD};

pub type Feat = Array3<f32>;

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    m: ArrayD<f32>,
    v: ArrayD<f32>,
}

impl Param {
    pub fn new(value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        let m = ArrayD::zeros(value.raw_dim());
        let v = ArrayD::zeros(value.raw_dim());
        Self { value, grad, m, v }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Adam with bias correction; `t` is the 1-based step counter.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub fn adam_step(params: &mut [&mut Param], cfg: &AdamConfig, lr: f32, t: u64) {
    let b1 = cfg.beta1;
    let b2 = cfg.beta2;
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    for p in params.iter_mut() {
        let g = &p.grad;
        p.m.zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        p.v.zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        let m = &p.m;
        let v = &p.v;
        ndarray::Zip::from(&mut p.value)
            .and(m)
            .and(v)
            .for_each(|w, &m, &v| {
                let mh = m / bc1;
                let vh = v / bc2;
                *w -= lr * mh / (vh.sqrt() + cfg.eps);
            });
    }
}

/// Cosine annealing from `initial` at step 0 to `final_lr` at `total - 1`.
pub fn cosine_lr(initial: f64, final_lr: f64, step: u64, total: u64) -> f64 {
    if total <= 1 {
        return initial;
    }
    let t = (step.min(total - 1)) as f64 / (total - 1) as f64;
    final_lr + 0.5 * (initial - final_lr) * (1.0 + (std::f64::consts::PI * t).cos())
}
