//! Shared fixtures for the criterion benchmarks.

use bluref_core::image::FlowField;
use bluref_core::synthgen::{synthesize_toy_video, ToyVideoConfig};
use bluref_core::Image;

/// Two consecutive frames of a deterministic toy scene.
pub fn frame_pair(height: usize, width: usize) -> (Image, Image) {
    let cfg = ToyVideoConfig { height, width, frames: 2, ..ToyVideoConfig::default() };
    let video = synthesize_toy_video(&cfg, 0xB31C).expect("toy video");
    let mut frames = video.frames;
    let b = frames.pop().expect("frame");
    let a = frames.pop().expect("frame");
    (a, b)
}

/// A smooth synthetic flow field covering `height x width`.
pub fn smooth_flow(height: usize, width: usize) -> FlowField {
    let mut flow = FlowField::zeros(height, width);
    for y in 0..height {
        for x in 0..width {
            let fy = y as f32 / height as f32;
            let fx = x as f32 / width as f32;
            flow.set(y, x, 2.0 * (fx * 6.0).sin(), 1.5 * (fy * 6.0).cos());
        }
    }
    flow
}
