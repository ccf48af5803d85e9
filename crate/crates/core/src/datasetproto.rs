//! Reference-collection protocol: pick N sharp reference frames displaced
//! by Delta frames on both sides of each blurry frame, measure matching
//! content, and assemble toy datasets from synthesized video.
//!
//! Disjointness convention: reference indices are audited against the blur
//! CENTER indices. With small Delta and a wide averaging window, reference
//! frames may fall inside the averaging window itself; the center frame is
//! the supervised ground truth, so only it must never appear as a reference.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BlurefError, Result};
use crate::image::{read_image_png, write_image_png, Image};
use crate::pseudosharp::{DenseMatcher, ReferenceSet};
use crate::synthgen::{synthesize_blur, synthesize_toy_video, ToyVideoConfig};

/// Delta values used throughout the experiments.
pub const DELTA_PRESETS: [usize; 3] = [1, 10, 20];

/// Frame-selection protocol: for blur frame `t`, take the left group
/// `{t-delta-n/2+1, ..., t-delta}` and the right group
/// `{t+delta, ..., t+delta+n/2-1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub delta: usize,
    /// Total reference count N, split N/2 per side.
    pub n_refs: usize,
    pub blur_indices: Vec<usize>,
    pub total_frames: usize,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 1 {
            return Err(BlurefError::InvalidConfig("delta must be >= 1".into()));
        }
        if self.n_refs < 2 || self.n_refs % 2 != 0 {
            return Err(BlurefError::InvalidConfig(format!(
                "n_refs must be even and >= 2, got {}",
                self.n_refs
            )));
        }
        Ok(())
    }
}

/// Reference indices for one blur frame, in temporal order. Errors name the
/// overflowing side so callers can drop the frame.
pub fn reference_indices(t: usize, delta: usize, n_refs: usize, total_frames: usize) -> Result<Vec<usize>> {
    let half = n_refs / 2;
    // left group ends at t - delta
    let left_start = (t as i64) - (delta as i64) - (half as i64) + 1;
    if left_start < 0 {
        return Err(BlurefError::InvalidInput(format!(
            "frame {t}: left reference group underflows (needs index {left_start})"
        )));
    }
    let right_end = t + delta + half - 1;
    if right_end >= total_frames {
        return Err(BlurefError::InvalidInput(format!(
            "frame {t}: right reference group overflows (needs index {right_end} of {total_frames})"
        )));
    }
    let mut idx = Vec::with_capacity(n_refs);
    for i in 0..half {
        idx.push(left_start as usize + i);
    }
    for i in 0..half {
        idx.push(t + delta + i);
    }
    Ok(idx)
}

/// Per-blur-frame reference indices; each entry is `(t, result)` so callers
/// can drop frames whose windows overflow the clip.
pub fn build_reference_sets(cfg: &ProtocolConfig) -> Result<Vec<(usize, Result<Vec<usize>>)>> {
    cfg.validate()?;
    Ok(cfg
        .blur_indices
        .iter()
        .map(|&t| (t, reference_indices(t, cfg.delta, cfg.n_refs, cfg.total_frames)))
        .collect())
}

/// Mean over references of the percentage of pixels whose matcher
/// confidence reaches `tau`.
pub fn matching_content_percentage(
    gt: &Image,
    refs: &ReferenceSet,
    dm: &dyn DenseMatcher,
    tau: f32,
) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(BlurefError::InvalidConfig(format!("tau must be in (0,1), got {tau}")));
    }
    let mut acc = 0.0f64;
    for r in refs.refs() {
        if r.height() != gt.height() || r.width() != gt.width() {
            return Err(BlurefError::DimensionMismatch("reference dims differ from target".into()));
        }
        let (_, conf) = dm.apply(gt, r)?;
        let hit = conf.values().iter().filter(|&&v| v >= tau).count();
        acc += hit as f64 / conf.values().len() as f64;
    }
    Ok(acc / refs.len() as f64 * 100.0)
}

/// Settings for assembling a toy dataset from a synthesized video.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDatasetConfig {
    pub video: ToyVideoConfig,
    pub scene_seed: u64,
    pub delta: usize,
    pub n_refs: usize,
    /// Odd frame-averaging window for blur synthesis.
    pub blur_window: usize,
    /// Spacing between consecutive blur centers.
    pub spacing: usize,
    /// Cap on the number of samples (None = as many as fit).
    pub max_samples: Option<usize>,
}

impl ToyDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        ProtocolConfig {
            delta: self.delta,
            n_refs: self.n_refs,
            blur_indices: vec![],
            total_frames: self.video.frames,
        }
        .validate()?;
        if self.blur_window % 2 == 0 {
            return Err(BlurefError::InvalidConfig("blur window must be odd".into()));
        }
        if self.spacing < 1 {
            return Err(BlurefError::InvalidConfig("spacing must be >= 1".into()));
        }
        Ok(())
    }

    /// First and last admissible blur centers given the window and the
    /// reference offsets.
    fn center_range(&self) -> Result<(usize, usize)> {
        let half_w = self.blur_window / 2;
        let half_n = self.n_refs / 2;
        let lo = (self.delta + half_n - 1).max(half_w);
        let needed = lo + (self.delta + half_n).max(half_w + 1);
        let too_short = || {
            BlurefError::InvalidInput(format!(
                "video holds {} frames but the protocol needs at least {needed}",
                self.video.frames
            ))
        };
        let hi_ref = self.video.frames.checked_sub(self.delta + half_n).ok_or_else(too_short)?;
        let hi_blur = self.video.frames - 1 - half_w;
        let hi = hi_ref.min(hi_blur);
        if lo > hi {
            return Err(too_short());
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyDatasetEntry {
    pub id: usize,
    pub center: usize,
    pub ref_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyDatasetManifest {
    pub config: ToyDatasetConfig,
    pub entries: Vec<ToyDatasetEntry>,
}

pub fn blur_path(root: &Path, id: usize) -> PathBuf {
    root.join("blur").join(format!("{id}.png"))
}

pub fn gt_path(root: &Path, id: usize) -> PathBuf {
    root.join("gt").join(format!("{id}.png"))
}

pub fn ref_path(root: &Path, id: usize, n: usize) -> PathBuf {
    root.join("refs").join(id.to_string()).join(format!("{n}.png"))
}

/// Synthesize the video and write `blur/<id>.png`, `refs/<id>/<n>.png`,
/// `gt/<id>.png` (held out for metrics) and `manifest.json`.
pub fn assemble_toy_dataset(cfg: &ToyDatasetConfig, out_dir: &Path) -> Result<ToyDatasetManifest> {
    cfg.validate()?;
    let (lo, hi) = cfg.center_range()?;
    let video = synthesize_toy_video(&cfg.video, cfg.scene_seed)?;

    let mut centers: Vec<usize> = (lo..=hi).step_by(cfg.spacing).collect();
    if let Some(cap) = cfg.max_samples {
        centers.truncate(cap);
    }
    if centers.is_empty() {
        return Err(BlurefError::InvalidInput("no admissible blur centers".into()));
    }

    let mut entries = Vec::with_capacity(centers.len());
    for (id, &t) in centers.iter().enumerate() {
        let refs = reference_indices(t, cfg.delta, cfg.n_refs, cfg.video.frames)?;
        // audit: the ground-truth center frame must never leak into the
        // reference set
        if refs.contains(&t) {
            return Err(BlurefError::InvalidInput(format!(
                "frame {t}: reference set contains the blur center"
            )));
        }
        let blur = synthesize_blur(&video.frames, t, cfg.blur_window)?;
        std::fs::create_dir_all(out_dir.join("blur"))?;
        std::fs::create_dir_all(out_dir.join("gt"))?;
        std::fs::create_dir_all(out_dir.join("refs").join(id.to_string()))?;
        write_image_png(&blur, &blur_path(out_dir, id))?;
        write_image_png(&video.frames[t], &gt_path(out_dir, id))?;
        for (n, &ri) in refs.iter().enumerate() {
            write_image_png(&video.frames[ri], &ref_path(out_dir, id, n))?;
        }
        entries.push(ToyDatasetEntry { id, center: t, ref_indices: refs });
    }

    let manifest = ToyDatasetManifest { config: cfg.clone(), entries };
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Load an assembled dataset back into memory:
/// `(blur images, reference sets, ground truths, manifest)`.
pub fn read_toy_dataset(root: &Path) -> Result<(Vec<Image>, Vec<ReferenceSet>, Vec<Image>, ToyDatasetManifest)> {
    let manifest_path = root.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|_| BlurefError::MissingFiles(vec![manifest_path.display().to_string()]))?;
    let manifest: ToyDatasetManifest = serde_json::from_str(&text)?;
    let mut blurs = Vec::with_capacity(manifest.entries.len());
    let mut refsets = Vec::with_capacity(manifest.entries.len());
    let mut gts = Vec::with_capacity(manifest.entries.len());
    let mut missing = Vec::new();
    for e in &manifest.entries {
        let bp = blur_path(root, e.id);
        let gp = gt_path(root, e.id);
        let rps: Vec<PathBuf> = (0..e.ref_indices.len()).map(|n| ref_path(root, e.id, n)).collect();
        for p in std::iter::once(&bp).chain(std::iter::once(&gp)).chain(&rps) {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        }
        if !missing.is_empty() {
            continue;
        }
        blurs.push(read_image_png(&bp)?);
        gts.push(read_image_png(&gp)?);
        let imgs: Vec<Image> = rps.iter().map(|p| read_image_png(p)).collect::<Result<_>>()?;
        refsets.push(ReferenceSet::with_sources(imgs, e.ref_indices.clone())?);
    }
    if !missing.is_empty() {
        return Err(BlurefError::MissingFiles(missing));
    }
    Ok((blurs, refsets, gts, manifest))
}
