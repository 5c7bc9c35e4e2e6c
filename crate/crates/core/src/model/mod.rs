//! Variational GIN encoder with per-modality decoders.
//!
//! A molecule is encoded to a diagonal Gaussian `(mu, logvar)`. During
//! pretraining a sample `z` is decoded into the features of every node on a
//! random walk from the molecule, each term weighted by the node's path
//! weight, and the posterior is pulled toward `N(0, I)` with weight `beta`.

mod decoder;
mod encoder;
mod loss;
mod train;

pub use decoder::{bce_with_logits, decode_nll, decode_outputs, DecoderKey, DecoderRegistry, Likelihood};
pub use encoder::{atom_features, gin_encode, Encoder, EncoderOutput, MolBatch, ATOM_FEATURES};
pub use loss::{batch_loss, BatchLoss, infoalign_loss, kl_standard_normal, reparameterize, LossBreakdown, PathItem};
pub use train::{embed, pretrain, pretrain_resume, EpochLog, TrainConfig, TrainOutcome};

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctxgraph::{ContextGraph, CtxGraphError, NodeKind};
use crate::diffcore::{Checkpoint, DiffError, ParamStore};
use crate::molparse::MolParseError;
use crate::rng::{derive_seed, stream_rng, tag};
use crate::walker::WalkError;

/// `|logvar| <= LOGVAR_BOUND`.
pub const LOGVAR_BOUND: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no decoder registered for {kind} features of dimension {dim}")]
    NoDecoder { kind: NodeKind, dim: usize },
    #[error("path mismatch: {0}")]
    PathMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Graph(#[from] CtxGraphError),
    #[error(transparent)]
    Smiles(#[from] MolParseError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Latent dimension D.
    pub latent_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub likelihood: Likelihood,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 64,
            layers: 3,
            hidden: 128,
            decoder_hidden: 128,
            likelihood: Likelihood::Bernoulli,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.layers == 0 || self.hidden == 0 || self.decoder_hidden == 0 {
            return Err(ModelError::Config("model sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder, decoders and the parameters they share a store with.
#[derive(Debug, Clone)]
pub struct InfoAlign {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub decoders: DecoderRegistry,
}

impl InfoAlign {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: ModelConfig, keys: &BTreeSet<DecoderKey>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = stream_rng(derive_seed(seed, tag::INIT, 0), 0);
        let encoder = Encoder::new(&mut store, &config, &mut rng)?;
        let decoders = DecoderRegistry::new(&mut store, &config, keys, &mut rng)?;
        Ok(InfoAlign {
            config,
            store,
            encoder,
            decoders,
        })
    }

    /// Decoder keys needed for every featured node kind in `graph`.
    pub fn keys_for_graph(graph: &ContextGraph) -> BTreeSet<DecoderKey> {
        graph
            .nodes()
            .iter()
            .filter(|n| n.modality_dim() > 0)
            .map(|n| DecoderKey::new(n.kind, n.modality_dim()))
            .collect()
    }

    pub fn for_graph(config: ModelConfig, graph: &ContextGraph, seed: u64) -> Result<Self> {
        InfoAlign::new(config, &Self::keys_for_graph(graph), seed)
    }

    pub fn encode(&self, g: &crate::molparse::MolecularGraph) -> Result<EncoderOutput> {
        gin_encode(self, g)
    }

    /// Model manifest echoed into checkpoints.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.config,
            "decoders": self.decoders.keys().map(|k| k.to_string()).collect::<Vec<_>>(),
        })
    }

    pub fn to_checkpoint(&self, step: u64, extra: serde_json::Value) -> Checkpoint {
        let mut config = self.manifest();
        if let (Some(obj), serde_json::Value::Object(extra)) = (config.as_object_mut(), extra) {
            obj.extend(extra);
        }
        let mut ck = Checkpoint::new(step, config);
        for (name, v) in self.store.named_values() {
            ck.push(name, v.clone());
        }
        ck
    }

    /// Rebuilds a model from a checkpoint written by [`InfoAlign::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |m: &str| ModelError::CorruptFile(m.to_string());
        let config: ModelConfig = serde_json::from_value(
            ck.config.get("model").cloned().ok_or_else(|| bad("missing model manifest"))?,
        )
        .map_err(|e| bad(&format!("model manifest: {e}")))?;
        let keys = ck
            .config
            .get("decoders")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("missing decoder list"))?
            .iter()
            .map(|v| {
                v.as_str()
                    .and_then(|s| s.parse::<DecoderKey>().ok())
                    .ok_or_else(|| bad("bad decoder key"))
            })
            .collect::<Result<BTreeSet<_>>>()?;
        let mut model = InfoAlign::new(config, &keys, 0)?;
        model
            .store
            .load_values(ck.arrays.iter().map(|(n, a)| (n.as_str(), a)))
            .map_err(|e| bad(&e.to_string()))?;
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.store.total_count()
    }

    /// Standard-normal noise of shape `rows x latent_dim`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Vec<Vec<f64>> {
        use rand_distr::{Distribution, StandardNormal};
        (0..rows)
            .map(|_| {
                (0..self.config.latent_dim)
                    .map(|_| StandardNormal.sample(rng))
                    .collect()
            })
            .collect()
    }
}
