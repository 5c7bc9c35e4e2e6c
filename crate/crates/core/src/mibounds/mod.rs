//! Mutual-information bounds on finite joints.
//!
//! A [`JointTable`] gives exact ground truth. The decoder lower bound
//! ([`i_dlb`]), the NWJ bound ([`i_nwj`]) and multi-sample InfoNCE
//! ([`i_nce`]) can each be evaluated by exhaustive summation ("exact mode")
//! or by Monte Carlo with standard errors. [`harness`] checks the ordering
//! `true_mi >= i_dlb >= i_nce` and the `ln K` ceiling of InfoNCE.

mod bounds;
pub mod harness;
mod joint;
mod train;

pub use bounds::{
    i_dlb, i_dlb_sampled, i_eub, i_nce, i_nce_sampled, i_nwj, i_nwj_sampled, ConditionalTable,
    Critic, Estimate, MAX_EXACT_TERMS,
};
pub use harness::{mi_bench, prop1_report, BenchReport, ConfigReport, MiBenchConfig, Mode};
pub use joint::{gaussian_mi, true_mi, JointTable};
pub use train::{train_nce_critic, train_nwj_critic};

use thiserror::Error;

/// Table value used for `ln 0` in critics, keeping every entry finite.
pub const LOG_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MiError {
    #[error("invalid joint table: {0}")]
    InvalidJoint(String),
    #[error("invalid critic or conditional table: {0}")]
    InvalidTable(String),
    #[error("batch size K = {0} is too small; need K >= 2")]
    BatchTooSmall(usize),
    #[error("exact enumeration needs {terms} terms, limit is {limit}")]
    ExactTooLarge { terms: u128, limit: u128 },
    #[error("alphabet sizes differ: joint {joint:?}, table {table:?}")]
    ShapeMismatch {
        joint: (usize, usize),
        table: (usize, usize),
    },
}

pub type Result<T> = std::result::Result<T, MiError>;
