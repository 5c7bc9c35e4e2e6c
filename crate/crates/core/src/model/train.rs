use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{batch_loss, InfoAlign, LossBreakdown, ModelConfig, ModelError, PathItem, Result};
use crate::ctxgraph::{ContextGraph, NodeIdx};
use crate::diffcore::{Adam, AdamConfig, Checkpoint, DenseArray, Tape};
use crate::molparse::MolecularGraph;
use crate::rng::{derive_seed, stream_rng, tag};
use crate::walker::{sample_walk, WalkConfig, WalkError, WalkPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    /// Molecules per optimizer step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub beta: f64,
    /// `walk.seed` is ignored; walk streams derive from `seed`.
    pub walk: WalkConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            epochs: 10,
            batch_size: 4,
            adam: AdamConfig::default(),
            beta: 1e-9,
            walk: WalkConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.walk.validate()?;
        if self.batch_size == 0 || self.walk.walks_per_molecule == 0 {
            return Err(ModelError::Config("batch size and walks per molecule must be positive".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(ModelError::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.adam.lr.is_finite() && self.adam.lr > 0.0) {
            return Err(ModelError::Config(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: u64,
    /// Mean over the epoch's batches.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: InfoAlign,
    pub adam: Adam,
    pub epochs_done: usize,
    pub log: Vec<EpochLog>,
    /// Mean total loss of every batch in this run, in order.
    pub batch_losses: Vec<f64>,
    pub graph_checksum: u64,
    pub config: TrainConfig,
}

impl TrainOutcome {
    /// Parameters, optimizer moments and the run manifest.
    pub fn checkpoint(&self) -> Checkpoint {
        let extra = serde_json::json!({
            "train": self.config,
            "graph_checksum": self.graph_checksum,
            "epochs_done": self.epochs_done,
        });
        let mut ck = self.model.to_checkpoint(self.adam.steps(), extra);
        let (m, v) = self.adam.moments();
        let names: Vec<String> = self.model.store.named_values().map(|(n, _)| n.to_string()).collect();
        for (i, name) in names.iter().enumerate() {
            ck.push(format!("adam.m.{name}"), m[i].clone());
            ck.push(format!("adam.v.{name}"), v[i].clone());
        }
        ck
    }
}

fn walk_or_stay<R: rand::Rng>(
    graph: &ContextGraph,
    start: NodeIdx,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Result<WalkPath> {
    match sample_walk(graph, start, cfg, rng) {
        Ok(p) => Ok(p),
        Err(WalkError::IsolatedNode(_)) => {
            let mut p = WalkPath::from_steps(vec![start], Vec::new());
            p.truncated = true;
            Ok(p)
        }
        Err(e) => Err(e.into()),
    }
}

fn run(
    graph: &ContextGraph,
    cfg: &TrainConfig,
    mut model: InfoAlign,
    mut adam: Adam,
    start_epoch: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let molecules: Vec<NodeIdx> = graph.molecule_nodes().collect();
    if molecules.is_empty() {
        return Err(ModelError::Config("graph has no molecule nodes".into()));
    }
    let graph_checksum = graph.checksum()?;
    let walk_cfg = WalkConfig {
        seed: 0,
        ..cfg.walk.clone()
    };
    let mut log = Vec::new();
    let mut batch_losses = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let mut order = molecules.clone();
        order.shuffle(&mut stream_rng(derive_seed(cfg.seed, tag::SHUFFLE, epoch as u64), 0));
        let mut parts = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let step = adam.steps();
            let mut walk_rng = stream_rng(derive_seed(cfg.seed, tag::WALK, step), 0);
            let mut paths = Vec::with_capacity(chunk.len() * walk_cfg.walks_per_molecule);
            for &m in chunk {
                for _ in 0..walk_cfg.walks_per_molecule {
                    paths.push(walk_or_stay(graph, m, &walk_cfg, &mut walk_rng)?);
                }
            }
            let mut noise_rng = stream_rng(derive_seed(cfg.seed, tag::NOISE, step), 0);
            let noise = model.sample_noise(paths.len(), &mut noise_rng);
            let items = paths
                .iter()
                .zip(noise)
                .map(|(p, e)| PathItem::from_walk(graph, p, e))
                .collect::<Result<Vec<_>>>()?;
            let mut tape = Tape::new();
            let loss = batch_loss(&mut tape, &model, &items, cfg.beta, cfg.walk.length)?;
            let grads = tape.backward(loss.total);
            model.store.zero_grad();
            model.store.accumulate(&grads);
            adam.step(&mut model.store);
            batch_losses.push(tape.value(loss.total).item());
            parts.push(loss.breakdown());
        }
        log.push(EpochLog {
            epoch,
            steps: adam.steps(),
            loss: LossBreakdown::mean(&parts),
        });
    }
    Ok(TrainOutcome {
        model,
        adam,
        epochs_done: cfg.epochs.max(start_epoch),
        log,
        batch_losses,
        graph_checksum,
        config: cfg.clone(),
    })
}

/// Trains a fresh model on every molecule of a finalized graph.
pub fn pretrain(graph: &ContextGraph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = InfoAlign::for_graph(cfg.model.clone(), graph, cfg.seed)?;
    let adam = Adam::new(&model.store, cfg.adam);
    run(graph, cfg, model, adam, 0)
}

/// Continues a run saved by [`TrainOutcome::checkpoint`] up to `cfg.epochs` total epochs.
pub fn pretrain_resume(graph: &ContextGraph, cfg: &TrainConfig, ck: &Checkpoint) -> Result<TrainOutcome> {
    let bad = |m: String| ModelError::CorruptFile(m);
    let model = InfoAlign::from_checkpoint(ck)?;
    if model.config != cfg.model {
        return Err(ModelError::Config("model configuration differs from checkpoint".into()));
    }
    let sum = ck.config.get("graph_checksum").and_then(|v| v.as_u64());
    if sum != Some(graph.checksum()?) {
        return Err(ModelError::Config("checkpoint was trained on a different graph".into()));
    }
    let done = ck
        .config
        .get("epochs_done")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| bad("missing epochs_done".into()))? as usize;
    let mut adam = Adam::new(&model.store, cfg.adam);
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, _) in model.store.named_values() {
        let get = |p: &str| -> Result<DenseArray> {
            ck.get(&format!("adam.{p}.{name}"))
                .cloned()
                .ok_or_else(|| bad(format!("missing optimizer state for {name}")))
        };
        m.push(get("m")?);
        v.push(get("v")?);
    }
    if !adam.restore(m, v, ck.step) {
        return Err(bad("optimizer state shape mismatch".into()));
    }
    run(graph, cfg, model, adam, done)
}

/// `mu` for each molecule, in input order.
pub fn embed(model: &InfoAlign, molecules: &[&MolecularGraph]) -> Result<Vec<Vec<f64>>> {
    let d = model.config.latent_dim;
    let mut out = Vec::with_capacity(molecules.len());
    for chunk in molecules.chunks(64) {
        let batch = super::MolBatch::new(chunk);
        let mut tape = Tape::new();
        let (mu, _) = model.encoder.forward(&mut tape, &model.store, &batch)?;
        out.extend(tape.value(mu).data().chunks(d).map(<[f64]>::to_vec));
    }
    Ok(out)
}
