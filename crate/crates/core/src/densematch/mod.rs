//! Dense matching: a small trainable coarse-to-fine correlation matcher
//! with a confidence head, plus an exhaustive ZNCC oracle.

mod checkpoint;
mod model;
mod oracle;
mod train;

pub use checkpoint::{load_matcher, save_matcher, sidecar_path, MatcherSidecar};
pub use model::{dm_apply, infer_flow, normalize_gray, Matcher, MatcherConfig};
pub use oracle::{brute_force_match, MatchResult};
pub use train::{evaluate_epe, train_matcher, MatchTrainConfig, StepLog};
