//! BluRef: reference-guided unsupervised deblurring at desk scale.
//!
//! Pipeline stages:
//! - [`image`]: pixel containers, backward warping, PSNR/SSIM.
//! - [`nn`]: tiny deterministic CPU training kit.
//! - [`synthgen`]: synthetic warp/degradation pairs and toy video.
//! - [`densematch`]: trainable coarse-to-fine matcher plus a brute-force oracle.
//! - [`pseudosharp`]: pseudo-sharp target generation strategies.
//! - [`blureftrain`]: the iterative deblur training loop and pair export.
//! - [`datasetproto`]: reference-collection protocol and toy dataset assembly.

pub mod blureftrain;
pub mod datasetproto;
pub mod densematch;
pub mod error;
pub mod image;
pub mod nn;
pub mod pseudosharp;
pub mod synthgen;

pub use error::{BlurefError, Result};
pub use image::{BinaryMask, ConfidenceMap, FlowField, Image};
