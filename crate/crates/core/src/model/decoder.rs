use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InfoAlign, ModelConfig, ModelError, Result};
use crate::ctxgraph::NodeKind;
use crate::diffcore::{Activation, DenseArray, Mlp, ParamStore, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Per-dimension BCE against targets in `[0, 1]`.
    #[default]
    Bernoulli,
    /// Unit-variance Gaussian on the raw decoder output.
    Gaussian,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `softplus(l) - y * l`, the BCE of `sigmoid(l)` against soft label `y`.
pub fn bce_with_logits(logit: f64, y: f64) -> f64 {
    logit.max(0.0) + (-logit.abs()).exp().ln_1p() - y * logit
}

impl Likelihood {
    pub fn nll(self, out: f64, y: f64) -> f64 {
        match self {
            Likelihood::Bernoulli => bce_with_logits(out, y),
            Likelihood::Gaussian => 0.5 * (y - out) * (y - out) + HALF_LN_2PI,
        }
    }

    /// Per-row NLL `[n, 1]` of `targets` under decoder outputs `out` (`[n, dim]`).
    pub fn nll_rows(self, tape: &mut Tape, out: Var, targets: DenseArray) -> Result<Var> {
        let dim = targets.cols();
        let y = tape.leaf(targets);
        let per = match self {
            Likelihood::Bernoulli => {
                let sp = tape.softplus(out);
                let yl = tape.mul(y, out)?;
                tape.sub(sp, yl)?
            }
            Likelihood::Gaussian => {
                let d = tape.sub(y, out)?;
                let sq = tape.mul(d, d)?;
                tape.scale(sq, 0.5)
            }
        };
        let rows = tape.sum_cols(per)?;
        Ok(match self {
            Likelihood::Bernoulli => rows,
            Likelihood::Gaussian => tape.add_scalar(rows, HALF_LN_2PI * dim as f64),
        })
    }
}

/// Decoders are keyed by node kind and feature dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecoderKey {
    pub kind: NodeKind,
    pub dim: usize,
}

impl DecoderKey {
    pub fn new(kind: NodeKind, dim: usize) -> Self {
        DecoderKey { kind, dim }
    }
}

impl fmt::Display for DecoderKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.dim)
    }
}

impl FromStr for DecoderKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, dim) = s.split_once(':').ok_or_else(|| format!("bad decoder key {s:?}"))?;
        let kind: NodeKind = kind.parse().map_err(|_| format!("bad node kind in {s:?}"))?;
        let dim = dim.parse().map_err(|_| format!("bad dimension in {s:?}"))?;
        Ok(DecoderKey { kind, dim })
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecoderRegistry {
    decoders: BTreeMap<DecoderKey, Mlp>,
}

impl DecoderRegistry {
    /// One `[D, hidden, dim]` MLP per key.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: &ModelConfig,
        keys: &BTreeSet<DecoderKey>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut decoders = BTreeMap::new();
        for &key in keys {
            if key.dim == 0 {
                continue;
            }
            let mlp = Mlp::new(
                store,
                &format!("dec.{}.{}", key.kind.as_str(), key.dim),
                &[cfg.latent_dim, cfg.decoder_hidden, key.dim],
                Activation::Relu,
                rng,
            )?;
            decoders.insert(key, mlp);
        }
        Ok(DecoderRegistry { decoders })
    }

    pub fn get(&self, key: DecoderKey) -> Result<&Mlp> {
        self.decoders.get(&key).ok_or(ModelError::NoDecoder {
            kind: key.kind,
            dim: key.dim,
        })
    }

    pub fn contains(&self, key: DecoderKey) -> bool {
        self.decoders.contains_key(&key)
    }

    pub fn keys(&self) -> impl Iterator<Item = DecoderKey> + '_ {
        self.decoders.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.decoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decoders.is_empty()
    }
}

/// Raw decoder outputs (logits for the Bernoulli likelihood) for one latent.
pub fn decode_outputs(model: &InfoAlign, z: &[f64], key: DecoderKey) -> Result<Vec<f64>> {
    let mlp = model.decoders.get(key)?;
    let mut tape = Tape::new();
    let zv = tape.leaf(DenseArray::row(z));
    let out = mlp.forward(&mut tape, &model.store, zv)?;
    Ok(tape.value(out).data().to_vec())
}

/// NLL of `target` under the decoder for `(kind, target.len())`.
pub fn decode_nll(model: &InfoAlign, z: &[f64], kind: NodeKind, target: &[f32]) -> Result<f64> {
    let key = DecoderKey::new(kind, target.len());
    let out = decode_outputs(model, z, key)?;
    let lik = model.config.likelihood;
    Ok(out
        .iter()
        .zip(target)
        .map(|(&o, &y)| lik.nll(o, f64::from(y)))
        .sum())
}
