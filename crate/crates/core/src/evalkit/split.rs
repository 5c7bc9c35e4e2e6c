use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::rng::{derive_seed, stream_rng, tag};

pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.15, 0.25];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into train/valid/test. Train and valid sizes
/// are rounded (each at least 1); test takes the rest.
pub fn split_random(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if n < 3 {
        return Err(EvalError::TooFew { need: 3, got: n });
    }
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) || total <= 0.0 {
        return Err(EvalError::Invalid(format!("bad split ratios {ratios:?}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(derive_seed(seed, tag::SPLIT, 0), 0));
    let size = |r: f64| ((r / total * n as f64).round() as usize).max(1);
    let n_train = size(ratios[0]).min(n - 2);
    let n_valid = size(ratios[1]).min(n - n_train - 1);
    let test = idx.split_off(n_train + n_valid);
    let valid = idx.split_off(n_train);
    Ok(Split {
        train: idx,
        valid,
        test,
    })
}
