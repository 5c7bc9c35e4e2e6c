use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DecoderKey, EncoderOutput, InfoAlign, MolBatch, ModelError, Result};
use crate::ctxgraph::{ContextGraph, NodeKind};
use crate::diffcore::{DenseArray, DiffError, Tape, Var};
use crate::molparse::MolecularGraph;
use crate::walker::WalkPath;

/// `z = mu + exp(logvar / 2) * noise`.
pub fn reparameterize(out: &EncoderOutput, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != out.mu.len() {
        return Err(DiffError::ShapeMismatch {
            op: "reparameterize",
            left: vec![out.mu.len()],
            right: vec![noise.len()],
        }
        .into());
    }
    Ok(out
        .mu
        .iter()
        .zip(&out.logvar)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// `KL(N(mu, diag(exp(logvar))) || N(0, I))`.
pub fn kl_standard_normal(out: &EncoderOutput) -> f64 {
    0.5 * out
        .mu
        .iter()
        .zip(&out.logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Summed `alpha`-weighted NLL per node kind, before the `1/L` factor.
    pub recon_per_modality: BTreeMap<String, f64>,
    pub kl: f64,
    pub beta: f64,
    pub walk_length: usize,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recon(&self) -> f64 {
        self.recon_per_modality.values().sum()
    }

    /// `(1/L) * recon + beta * kl`, recomputed from the parts.
    pub fn recompute_total(&self) -> f64 {
        self.recon() / self.walk_length as f64 + self.beta * self.kl
    }

    /// Componentwise mean.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut out = LossBreakdown {
            beta: items.first().map_or(0.0, |b| b.beta),
            walk_length: items.first().map_or(1, |b| b.walk_length),
            ..LossBreakdown::default()
        };
        for b in items {
            for (k, v) in &b.recon_per_modality {
                *out.recon_per_modality.entry(k.clone()).or_insert(0.0) += v / n;
            }
            out.kl += b.kl / n;
            out.total += b.total / n;
        }
        out
    }
}

/// One molecule, its weighted reconstruction targets and its noise draw.
#[derive(Debug, Clone)]
pub struct PathItem<'a> {
    pub molecule: &'a MolecularGraph,
    pub targets: Vec<(NodeKind, &'a [f32], f64)>,
    pub noise: Vec<f64>,
}

impl<'a> PathItem<'a> {
    /// Targets of `path` in `graph`; featureless nodes contribute nothing.
    pub fn from_walk(graph: &'a ContextGraph, path: &WalkPath, noise: Vec<f64>) -> Result<Self> {
        if path.is_empty() {
            return Err(ModelError::PathMismatch("empty path".into()));
        }
        let start = graph.node(path.start());
        let molecule = start.molecule.as_ref().ok_or_else(|| {
            ModelError::PathMismatch(format!("path starts at non-molecule {:?}", start.id))
        })?;
        let targets = path
            .targets()
            .map(|(idx, a)| {
                let n = graph.node(idx);
                (n.kind, n.features.as_slice(), a)
            })
            .filter(|t| !t.1.is_empty())
            .collect();
        Ok(PathItem {
            molecule,
            targets,
            noise,
        })
    }
}

/// Batch objective on `tape`; `total` is the mean per-path loss.
pub struct BatchLoss {
    pub total: Var,
    pub per_item: Vec<LossBreakdown>,
}

impl BatchLoss {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown::mean(&self.per_item)
    }
}

pub fn batch_loss(
    tape: &mut Tape,
    model: &InfoAlign,
    items: &[PathItem<'_>],
    beta: f64,
    walk_length: usize,
) -> Result<BatchLoss> {
    if items.is_empty() || walk_length == 0 {
        return Err(ModelError::PathMismatch("empty batch or zero walk length".into()));
    }
    let d = model.config.latent_dim;
    let b = items.len();
    let graphs: Vec<&MolecularGraph> = items.iter().map(|i| i.molecule).collect();
    let batch = MolBatch::new(&graphs);
    let (mu, logvar) = model.encoder.forward(tape, &model.store, &batch)?;

    let mut noise = Vec::with_capacity(b * d);
    for it in items {
        if it.noise.len() != d {
            return Err(DiffError::ShapeMismatch {
                op: "reparameterize",
                left: vec![d],
                right: vec![it.noise.len()],
            }
            .into());
        }
        noise.extend_from_slice(&it.noise);
    }
    let eps = tape.leaf(DenseArray::new(vec![b, d], noise)?);
    let half = tape.scale(logvar, 0.5);
    let std = tape.exp(half);
    let spread = tape.mul(std, eps)?;
    let z = tape.add(mu, spread)?;

    struct Group {
        rows: Vec<usize>,
        targets: Vec<f64>,
        alphas: Vec<f64>,
    }
    let mut groups: BTreeMap<DecoderKey, Group> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        for &(kind, feats, alpha) in &it.targets {
            let g = groups.entry(DecoderKey::new(kind, feats.len())).or_insert(Group {
                rows: Vec::new(),
                targets: Vec::new(),
                alphas: Vec::new(),
            });
            g.rows.push(i);
            g.targets.extend(feats.iter().map(|&y| f64::from(y)));
            g.alphas.push(alpha);
        }
    }

    let mut per_item: Vec<LossBreakdown> = (0..b)
        .map(|_| LossBreakdown {
            beta,
            walk_length,
            ..LossBreakdown::default()
        })
        .collect();
    let mut recon: Option<Var> = None;
    for (key, g) in groups {
        let mlp = model.decoders.get(key)?;
        let n = g.rows.len();
        let zg = tape.gather_rows(z, &g.rows)?;
        let out = mlp.forward(tape, &model.store, zg)?;
        let nll = model
            .config
            .likelihood
            .nll_rows(tape, out, DenseArray::new(vec![n, key.dim], g.targets)?)?;
        let alpha = tape.leaf(DenseArray::new(vec![n, 1], g.alphas)?);
        let weighted = tape.mul(nll, alpha)?;
        for (r, &i) in g.rows.iter().enumerate() {
            *per_item[i]
                .recon_per_modality
                .entry(key.kind.as_str().to_string())
                .or_insert(0.0) += tape.value(weighted).data()[r];
        }
        let per_path = tape.scatter_add_rows(weighted, &g.rows, b)?;
        recon = Some(match recon {
            Some(acc) => tape.add(acc, per_path)?,
            None => per_path,
        });
    }

    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar);
    let s = tape.add(mu2, var)?;
    let s = tape.sub(s, logvar)?;
    let s = tape.add_scalar(s, -1.0);
    let kl_sum = tape.sum_cols(s)?;
    let kl = tape.scale(kl_sum, 0.5);

    let kl_term = tape.scale(kl, beta);
    let totals = match recon {
        Some(r) => {
            let r = tape.scale(r, 1.0 / walk_length as f64);
            tape.add(r, kl_term)?
        }
        None => kl_term,
    };
    for (i, bd) in per_item.iter_mut().enumerate() {
        bd.kl = tape.value(kl).data()[i];
        bd.total = tape.value(totals).data()[i];
    }
    let total = tape.mean(totals);
    Ok(BatchLoss { total, per_item })
}

/// Loss for one molecule and one walk from it.
pub fn infoalign_loss(
    model: &InfoAlign,
    graph: &ContextGraph,
    x: &MolecularGraph,
    path: &WalkPath,
    beta: f64,
    noise: &[f64],
    walk_length: usize,
) -> Result<LossBreakdown> {
    let item = PathItem::from_walk(graph, path, noise.to_vec())?;
    if item.molecule != x {
        return Err(ModelError::PathMismatch("path does not start at the given molecule".into()));
    }
    let mut tape = Tape::new();
    let loss = batch_loss(&mut tape, model, &[item], beta, walk_length)?;
    Ok(loss.per_item.into_iter().next().expect("one item"))
}
