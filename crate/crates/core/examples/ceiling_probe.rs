//! Measures the resampling ceiling: PSNR of a reference frame warped onto the
//! center frame by the GROUND-TRUTH camera flow (no matcher involved).

use bluref_core::image::{psnr, warp_backward, FlowField};
use bluref_core::synthgen::{synthesize_blur, synthesize_toy_video, ToyVideoConfig};

fn main() {
    let cfg = ToyVideoConfig {
        height: 96,
        width: 96,
        frames: 24,
        n_sprites: 0,
        camera_speed: 1.5,
        ..ToyVideoConfig::default()
    };
    let video = synthesize_toy_video(&cfg, 21).unwrap();
    let (vx, vy) = video.camera_velocity;
    let t = 10usize;
    println!("camera velocity ({vx:.3}, {vy:.3})");
    let blur = synthesize_blur(&video.frames, t, 7).unwrap();
    println!("blurry psnr {:.2}", psnr(&blur, &video.frames[t], 1.0).unwrap());
    for k in [2i32, 3, 4, -2, -3, -4] {
        let r = (t as i32 + k) as usize;
        // frames move opposite to camera: frame t content at world x+t*v, so
        // frame r aligned onto frame t needs flow = (r - t) * v (backward warp)
        let dx = k as f32 * vx;
        let dy = k as f32 * vy;
        let flow = FlowField::from_fn(96, 96, |_, _| (dx, dy));
        let w = warp_backward(&video.frames[r], &flow).unwrap();
        let p = psnr(&w, &video.frames[t], 1.0).unwrap();
        let flow2 = FlowField::from_fn(96, 96, |_, _| (-dx, -dy));
        let w2 = warp_backward(&video.frames[r], &flow2).unwrap();
        let p2 = psnr(&w2, &video.frames[t], 1.0).unwrap();
        println!("k {k:+}: gt-warp psnr {p:.2} (alt sign {p2:.2})");
    }
}
