//! Downstream evaluation: metrics, frozen-embedding probes, zero-shot
//! matching and random splits.

mod matching;
mod metrics;
mod probe;
mod split;
pub mod tsv;

pub use matching::{match_zero_shot, rank_candidates, ranking_metrics, MatchReport, RankingResult};
pub use metrics::{auc, hit_at, mae, ndcg_at, threshold_fractions};
pub use probe::{probe_eval, probe_train, LabeledSet, ProbeConfig, ProbeHead, ProbeReport, TaskKind, TaskMetric};
pub use split::{split_random, Split, DEFAULT_RATIOS};

use thiserror::Error;

use crate::diffcore::DiffError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} items, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("candidate dimension {found} does not match decoder dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("line {line}: {msg}")]
    Table { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
