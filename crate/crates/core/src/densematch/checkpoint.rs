//! Portable matcher checkpoints: binary tensors + JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{Matcher, MatcherConfig};
use crate::error::{BlurefError, Result};

const MAGIC: &[u8; 4] = b"BMCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatcherSidecar {
    pub arch: MatcherConfig,
    pub arch_hash: u64,
    /// Free-form training provenance (config JSON), if any.
    pub training: Option<serde_json::Value>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn save_matcher(matcher: &Matcher, path: &Path, training: Option<serde_json::Value>) -> Result<()> {
    let flat = matcher.params_flat();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&matcher.cfg.arch_hash().to_le_bytes())?;
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in &flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = MatcherSidecar {
        arch: matcher.cfg.clone(),
        arch_hash: matcher.cfg.arch_hash(),
        training,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_matcher(path: &Path) -> Result<Matcher> {
    let sidecar_text = std::fs::read_to_string(sidecar_path(path)).map_err(|_| {
        BlurefError::MissingFiles(vec![sidecar_path(path).display().to_string()])
    })?;
    let sidecar: MatcherSidecar = serde_json::from_str(&sidecar_text)?;
    if sidecar.arch.arch_hash() != sidecar.arch_hash {
        return Err(BlurefError::InvalidInput("sidecar architecture hash mismatch".into()));
    }

    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 24];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(BlurefError::InvalidInput("bad matcher checkpoint magic".into()));
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
    let mut matcher = Matcher::new(sidecar.arch, 0);
    matcher.load_flat(&flat)?;
    Ok(matcher)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn checkpoint_roundtrip_preserves_params() {
        let dir = tempdir().unwrap();
        let m = Matcher::new(MatcherConfig::default(), 9);
        let path = dir.path().join("dm.ckpt");
        save_matcher(&m, &path, None).unwrap();
        let loaded = load_matcher(&path).unwrap();
        assert_eq!(loaded.params_flat(), m.params_flat());
    }

    #[test]
    fn hash_mismatch_refused() {
        let dir = tempdir().unwrap();
        let m = Matcher::new(MatcherConfig::default(), 9);
        let path = dir.path().join("dm.ckpt");
        save_matcher(&m, &path, None).unwrap();
        // tamper with the sidecar architecture
        let sp = sidecar_path(&path);
        let mut sidecar: MatcherSidecar =
            serde_json::from_str(&std::fs::read_to_string(&sp).unwrap()).unwrap();
        sidecar.arch.feat_ch += 1;
        std::fs::write(&sp, serde_json::to_string(&sidecar).unwrap()).unwrap();
        assert!(load_matcher(&path).is_err());
    }
}
