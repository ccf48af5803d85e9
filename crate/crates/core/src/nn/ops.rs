//! Activations, pooling and upsampling with explicit backward passes.

use super::Feat;
use ndarray::Array3;

pub fn leaky_relu(x: &Feat, slope: f32) -> Feat {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

/// Gradient w.r.t. the pre-activation, given the forward input.
pub fn leaky_relu_backward(input: &Feat, grad_out: &Feat, slope: f32) -> Feat {
    let mut g = grad_out.clone();
    g.zip_mut_with(input, |g, &x| {
        if x < 0.0 {
            *g *= slope;
        }
    });
    g
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// 2x2 average pooling (floor division of dims).
pub fn avg_pool2(x: &Feat) -> Feat {
    let (c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    Array3::from_shape_fn((c, oh, ow), |(ci, y, xx)| {
        0.25 * (x[[ci, 2 * y, 2 * xx]]
            + x[[ci, 2 * y, 2 * xx + 1]]
            + x[[ci, 2 * y + 1, 2 * xx]]
            + x[[ci, 2 * y + 1, 2 * xx + 1]])
    })
}

pub fn upsample_nearest2(x: &Feat) -> Feat {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, h * 2, w * 2), |(ci, y, xx)| x[[ci, y / 2, xx / 2]])
}

pub fn upsample_nearest2_backward(grad_out: &Feat) -> Feat {
    let (c, h2, w2) = grad_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut g = Array3::<f32>::zeros((c, h, w));
    for ci in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                g[[ci, y / 2, x / 2]] += grad_out[[ci, y, x]];
            }
        }
    }
    g
}
