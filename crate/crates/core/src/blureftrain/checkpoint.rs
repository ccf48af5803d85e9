//! Portable deblur-network checkpoints: binary tensors + JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{DeblurConfig, DeblurNet};
use crate::densematch::sidecar_path;
use crate::error::{BlurefError, Result};

const MAGIC: &[u8; 4] = b"BDCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeblurSidecar {
    pub arch: DeblurConfig,
    pub arch_hash: u64,
    /// Free-form training provenance (config JSON, metric history), if any.
    pub training: Option<serde_json::Value>,
}

pub fn save_deblur(net: &DeblurNet, path: &Path, training: Option<serde_json::Value>) -> Result<()> {
    let flat = net.params_flat();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&net.cfg.arch_hash().to_le_bytes())?;
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in &flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = DeblurSidecar { arch: net.cfg.clone(), arch_hash: net.cfg.arch_hash(), training };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_deblur(path: &Path) -> Result<DeblurNet> {
    let sidecar_text = std::fs::read_to_string(sidecar_path(path))
        .map_err(|_| BlurefError::MissingFiles(vec![sidecar_path(path).display().to_string()]))?;
    let sidecar: DeblurSidecar = serde_json::from_str(&sidecar_text)?;
    if sidecar.arch.arch_hash() != sidecar.arch_hash {
        return Err(BlurefError::InvalidInput("sidecar architecture hash mismatch".into()));
    }

    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 24];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(BlurefError::InvalidInput("bad deblur checkpoint magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(BlurefError::InvalidInput(format!("unsupported checkpoint version {version}")));
    }
    let stored_hash = u64::from_le_bytes(header[8..16].try_into().unwrap());
    if stored_hash != sidecar.arch.arch_hash() {
        return Err(BlurefError::InvalidInput(format!(
            "architecture hash mismatch: checkpoint {stored_hash:#x} vs config {:#x}",
            sidecar.arch.arch_hash()
        )));
    }
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let mut raw = vec![0u8; count * 4];
    r.read_exact(&mut raw)?;
    let flat: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut net = DeblurNet::new(sidecar.arch, 0);
    net.load_flat(&flat)?;
    Ok(net)
}
