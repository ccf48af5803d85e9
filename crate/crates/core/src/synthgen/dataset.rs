//! On-disk layout for matcher training pairs.
//!
//! `pairs/<index>/{warped.png, gt.png, flow.bflw, valid.png}` plus a
//! `manifest.json` listing indices, seeds and the generating configs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::degrade::DegradationConfig;
use super::pairs::{make_warp_pair, WarpPair};
use super::warp_sample::WarpConfig;
use crate::error::{BlurefError, Result};
use crate::image::{read_flow, read_image_png, read_mask_png, write_flow, write_image_png, write_mask_png};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairManifest {
    pub warp: WarpConfig,
    pub degradation: DegradationConfig,
    pub base_seed: u64,
    pub entries: Vec<PairEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEntry {
    pub index: usize,
    pub seed: u64,
    pub source: usize,
}

/// Generate `count` pairs from the sharp source images (round-robin) and
/// write them under `root`. Deterministic for a fixed `(sources, base_seed)`.
pub fn write_pair_dataset(
    root: &Path,
    sources: &[crate::image::Image],
    wcfg: &WarpConfig,
    dcfg: &DegradationConfig,
    count: usize,
    base_seed: u64,
) -> Result<PairManifest> {
    if sources.is_empty() {
        return Err(BlurefError::InvalidInput("no sharp source images".into()));
    }
    fs::create_dir_all(root.join("pairs"))?;
    let mut entries = Vec::with_capacity(count);
    for index in 0..count {
        let source = index % sources.len();
        let seed = base_seed.wrapping_add(index as u64).wrapping_mul(0x9E3779B97F4A7C15);
        let pair = make_warp_pair(&sources[source], wcfg, dcfg, seed)?;
        let dir = root.join("pairs").join(index.to_string());
        fs::create_dir_all(&dir)?;
        write_image_png(&pair.warped, &dir.join("warped.png"))?;
        write_image_png(&pair.gt, &dir.join("gt.png"))?;
        write_flow(&pair.gt_flow, &dir.join("flow.bflw"))?;
        write_mask_png(&pair.valid, &dir.join("valid.png"))?;
        entries.push(PairEntry { index, seed, source });
    }
    let manifest = PairManifest {
        warp: wcfg.clone(),
        degradation: dcfg.clone(),
        base_seed,
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(root.join("manifest.json"), json)?;
    Ok(manifest)
}

pub fn read_pair_manifest(root: &Path) -> Result<PairManifest> {
    let text = fs::read_to_string(root.join("manifest.json"))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn pair_dir(root: &Path, index: usize) -> PathBuf {
    root.join("pairs").join(index.to_string())
}

/// Load one stored pair. Stored PNGs quantize images to 8 bits; the flow is
/// exact. `clean` is reconstructed as the stored warped image (degradations
/// already applied), so consistency checks should use freshly generated pairs.
pub fn read_pair(root: &Path, index: usize) -> Result<WarpPair> {
    let dir = pair_dir(root, index);
    let mut missing = Vec::new();
    for name in ["warped.png", "gt.png", "flow.bflw", "valid.png"] {
        if !dir.join(name).exists() {
            missing.push(dir.join(name).display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(BlurefError::MissingFiles(missing));
    }
    let warped = read_image_png(&dir.join("warped.png"))?;
    let gt = read_image_png(&dir.join("gt.png"))?;
    let gt_flow = read_flow(&dir.join("flow.bflw"))?;
    let valid = read_mask_png(&dir.join("valid.png"))?;
    Ok(WarpPair { clean: warped.clone(), warped, gt, gt_flow, valid, seed: 0 })
}
