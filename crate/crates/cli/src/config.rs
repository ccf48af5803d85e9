//! JSON run configurations: schema-versioned, unknown keys rejected.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use bluref_core::blureftrain::{BlurRefConfig, DeblurConfig, PairTrainConfig};
use bluref_core::densematch::{MatchTrainConfig, MatcherConfig};
use bluref_core::datasetproto::ToyDatasetConfig;
use bluref_core::pseudosharp::Strategy;
use bluref_core::synthgen::{DegradationConfig, ToyVideoConfig, WarpConfig};

pub const SCHEMA_VERSION: u32 = 1;

use crate::CliError;

fn check_schema(version: u32, path: &Path) -> Result<(), CliError> {
    if version != SCHEMA_VERSION {
        return Err(CliError::config(format!(
            "{}: unsupported schema_version {version}, expected {SCHEMA_VERSION}",
            path.display()
        )));
    }
    Ok(())
}

pub fn load_config<T: serde::de::DeserializeOwned + SchemaVersioned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: T = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    check_schema(cfg.schema_version(), path)?;
    Ok(cfg)
}

/// Serialize the resolved configuration beside the artifacts it produced.
pub fn write_resolved_config<T: Serialize>(cfg: &T, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let text = serde_json::to_string_pretty(cfg)
        .map_err(|e| CliError::config(format!("cannot serialize resolved config: {e}")))?;
    std::fs::write(out_dir.join("resolved_config.json"), text)
        .map_err(|e| CliError::data(format!("cannot write resolved config: {e}")))?;
    Ok(())
}

/// Environment override for every seed-bearing subcommand.
pub fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var("BLUREF_SEED") {
        Err(_) => Ok(None),
        Ok(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::config(format!("BLUREF_SEED must be a u64, got {v:?}"))),
    }
}

pub trait SchemaVersioned {
    fn schema_version(&self) -> u32;
}

macro_rules! versioned {
    ($t:ty) => {
        impl SchemaVersioned for $t {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }
        }
    };
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDatasetSection {
    pub out_dir: PathBuf,
    pub config: ToyDatasetConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpPairsSection {
    pub out_dir: PathBuf,
    pub count: usize,
    pub video: ToyVideoConfig,
    pub warp: WarpConfig,
    pub degradation: DegradationConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub toy_dataset: Option<ToyDatasetSection>,
    pub warp_pairs: Option<WarpPairsSection>,
}
versioned!(GenDataConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDmConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub pairs_dir: PathBuf,
    pub out_dir: PathBuf,
    pub arch: MatcherConfig,
    pub train: MatchTrainConfig,
    /// Pairs held out from training for the EPE report (taken from the end).
    pub holdout: usize,
    /// Fail (exit 4) if held-out EPE exceeds this budget, when set.
    pub epe_budget: Option<f64>,
}
versioned!(TrainDmConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    pub schema_version: u32,
    pub checkpoint: PathBuf,
    pub target: PathBuf,
    pub reference: PathBuf,
    pub out_dir: PathBuf,
}
versioned!(MatchConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenPseudoConfig {
    pub schema_version: u32,
    pub checkpoint: PathBuf,
    pub blur: PathBuf,
    pub refs_dir: PathBuf,
    pub strategy: Strategy,
    pub tau: f32,
    pub out_dir: PathBuf,
}
versioned!(GenPseudoConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlurefConfig {
    pub schema_version: u32,
    pub dataset_dir: PathBuf,
    pub matcher_checkpoint: PathBuf,
    pub out_dir: PathBuf,
    pub net: DeblurConfig,
    pub train: BlurRefConfig,
    pub export_pairs: Option<PathBuf>,
}
versioned!(RunBlurefConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPairsConfig {
    pub schema_version: u32,
    pub pairs_dir: PathBuf,
    pub out_dir: PathBuf,
    pub net: DeblurConfig,
    pub train: PairTrainConfig,
}
versioned!(TrainPairsConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub schema_version: u32,
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Training-history CSV to render as a masked-PSNR-vs-epoch plot.
    pub history_csv: Option<PathBuf>,
}
versioned!(EvalConfig);
