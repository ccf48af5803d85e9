//! Synthetic data generation: geometric warps, blind degradations, toy video.

mod dataset;
mod degrade;
mod pairs;
mod toyvideo;
mod warp_sample;

pub use dataset::{pair_dir, read_pair, read_pair_manifest, write_pair_dataset, PairEntry, PairManifest};
pub use degrade::{
    apply_plan, degrade, motion_blur_kernel, sample_plan, AnisoBlurCfg, DegradationConfig,
    DegradationPlan, DegradationStage, GaussianBlurCfg, JpegCfg, MotionBlurCfg, NoiseCfg,
    ResampleCfg,
};
pub use pairs::{make_warp_pair, make_warp_pair_from, WarpPair};
pub use toyvideo::{synthesize_blur, synthesize_toy_video, SpriteSpec, ToyVideo, ToyVideoConfig};
pub use warp_sample::{sample_flow_field, Homography, WarpConfig, WarpKind};
