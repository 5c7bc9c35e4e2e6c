//! Weighted random walks from molecule nodes with cumulative path weights.
//!
//! A path of length `L` has `L` nodes including the start. The weight of the
//! `i`-th visited node (1-based over non-start nodes) is the product of the
//! first `i` traversed edge weights.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctxgraph::{ContextGraph, CtxGraphError, NodeIdx, NodeKind};
use crate::rng::{derive_seed, stream_rng, tag};

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("node {0:?} has no neighbors")]
    IsolatedNode(String),
    #[error("walk start {0:?} is not a molecule")]
    NotAMolecule(String),
    #[error("walk length must be at least 2, got {0}")]
    InvalidLength(usize),
    #[error(transparent)]
    Graph(#[from] CtxGraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionMode {
    /// Probability proportional to the effective edge weight.
    #[default]
    WeightProportional,
    /// Uniform over neighbors.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Node count per path, start included.
    pub length: usize,
    pub walks_per_molecule: usize,
    pub seed: u64,
    pub mode: TransitionMode,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            length: 4,
            walks_per_molecule: 2,
            seed: 0,
            mode: TransitionMode::WeightProportional,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        if self.length < 2 {
            return Err(WalkError::InvalidLength(self.length));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    pub nodes: Vec<NodeIdx>,
    pub edge_weights: Vec<f64>,
    /// One entry per non-start node.
    pub alphas: Vec<f64>,
    /// Set when a dead end stopped the walk before `length` nodes.
    pub truncated: bool,
}

impl WalkPath {
    /// Builds a path from visited nodes and the weights of the traversed edges.
    pub fn from_steps(nodes: Vec<NodeIdx>, edge_weights: Vec<f64>) -> WalkPath {
        assert_eq!(nodes.len(), edge_weights.len() + 1, "one weight per step");
        let alphas = edge_weights
            .iter()
            .scan(1.0f64, |acc, &w| {
                *acc *= w;
                Some(*acc)
            })
            .collect();
        WalkPath {
            nodes,
            edge_weights,
            alphas,
            truncated: false,
        }
    }

    pub fn start(&self) -> NodeIdx {
        self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Reconstruction targets: the start itself with weight 1, then every
    /// visited node with its cumulative weight. Repeats are kept.
    pub fn targets(&self) -> impl Iterator<Item = (NodeIdx, f64)> + '_ {
        std::iter::once((self.nodes[0], 1.0))
            .chain(self.nodes[1..].iter().copied().zip(self.alphas.iter().copied()))
    }
}

pub fn transition<R: Rng + ?Sized>(
    g: &ContextGraph,
    current: NodeIdx,
    mode: TransitionMode,
    rng: &mut R,
) -> Result<(NodeIdx, f64), WalkError> {
    let nbrs = g.neighbors(current)?;
    if nbrs.is_empty() {
        return Err(WalkError::IsolatedNode(g.node(current).id.clone()));
    }
    let pick = match mode {
        TransitionMode::Uniform => rng.random_range(0..nbrs.len()),
        TransitionMode::WeightProportional => {
            let total: f64 = nbrs.iter().map(|n| n.weight).sum();
            let mut u = rng.random::<f64>() * total;
            let mut chosen = nbrs.len() - 1;
            for (i, n) in nbrs.iter().enumerate() {
                if u < n.weight {
                    chosen = i;
                    break;
                }
                u -= n.weight;
            }
            chosen
        }
    };
    Ok((nbrs[pick].node, nbrs[pick].weight))
}

pub fn sample_walk<R: Rng + ?Sized>(
    g: &ContextGraph,
    start: NodeIdx,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Result<WalkPath, WalkError> {
    cfg.validate()?;
    let rec = g.node(start);
    if rec.kind != NodeKind::Molecule {
        return Err(WalkError::NotAMolecule(rec.id.clone()));
    }
    let mut nodes = vec![start];
    let mut weights = Vec::with_capacity(cfg.length - 1);
    let mut truncated = false;
    let mut current = start;
    while nodes.len() < cfg.length {
        match transition(g, current, cfg.mode, rng) {
            Ok((next, w)) => {
                nodes.push(next);
                weights.push(w);
                current = next;
            }
            Err(WalkError::IsolatedNode(_)) if nodes.len() > 1 => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut path = WalkPath::from_steps(nodes, weights);
    path.truncated = truncated;
    Ok(path)
}

/// `walks_per_molecule` paths per start, start-major. Walk `j` of start `i`
/// draws from its own stream, so the output depends only on
/// `(graph, cfg, starts)`.
pub fn batch_walks(
    g: &ContextGraph,
    starts: &[NodeIdx],
    cfg: &WalkConfig,
) -> Result<Vec<WalkPath>, WalkError> {
    cfg.validate()?;
    let seed = derive_seed(cfg.seed, tag::WALK, 0);
    let per = cfg.walks_per_molecule as u64;
    let mut out = Vec::with_capacity(starts.len() * cfg.walks_per_molecule);
    for (i, &s) in starts.iter().enumerate() {
        for j in 0..per {
            let mut rng = stream_rng(seed, i as u64 * per + j);
            out.push(sample_walk(g, s, cfg, &mut rng)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctxgraph::{NodeRecord, Relation};

    fn star() -> ContextGraph {
        let mut g = ContextGraph::new();
        g.add_node(NodeRecord::molecule("m", "CCO", 1, 64).unwrap()).unwrap();
        g.add_node(NodeRecord::new("a", NodeKind::CellMorphology, vec![0.1])).unwrap();
        g.add_node(NodeRecord::new("b", NodeKind::CellMorphology, vec![0.2])).unwrap();
        g.add_node(NodeRecord::molecule("lonely", "C", 1, 64).unwrap()).unwrap();
        g.add_edge("m", "a", Relation::Similarity, 0.9).unwrap();
        g.add_edge("m", "b", Relation::Similarity, 0.3).unwrap();
        g.finalize().unwrap();
        g
    }

    #[test]
    fn alphas_are_running_products() {
        let p = WalkPath::from_steps(
            vec![NodeIdx(0), NodeIdx(1), NodeIdx(2), NodeIdx(3)],
            vec![1.0, 0.8, 0.5],
        );
        assert_eq!(p.alphas, vec![1.0, 0.8, 0.4]);
        let t: Vec<_> = p.targets().collect();
        assert_eq!(t[0], (NodeIdx(0), 1.0));
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn single_neighbor_is_certain() {
        let mut g = ContextGraph::new();
        g.add_node(NodeRecord::molecule("m", "CC", 1, 64).unwrap()).unwrap();
        g.add_node(NodeRecord::new("c", NodeKind::CellMorphology, vec![1.0])).unwrap();
        g.add_perturbation_edge("m", "c").unwrap();
        g.finalize().unwrap();
        let mut rng = stream_rng(3, 0);
        for _ in 0..20 {
            assert_eq!(transition(&g, NodeIdx(0), TransitionMode::WeightProportional, &mut rng).unwrap(), (NodeIdx(1), 1.0));
        }
        let cfg = WalkConfig { length: 2, ..Default::default() };
        let p = sample_walk(&g, NodeIdx(0), &cfg, &mut rng).unwrap();
        assert_eq!(p.alphas, vec![1.0]);
    }

    #[test]
    fn error_cases() {
        let g = star();
        let mut rng = stream_rng(0, 0);
        let lonely = g.node_idx("lonely").unwrap();
        assert!(matches!(
            transition(&g, lonely, TransitionMode::Uniform, &mut rng),
            Err(WalkError::IsolatedNode(_))
        ));
        assert!(matches!(
            sample_walk(&g, lonely, &WalkConfig::default(), &mut rng),
            Err(WalkError::IsolatedNode(_))
        ));
        assert!(matches!(
            sample_walk(&g, g.node_idx("a").unwrap(), &WalkConfig::default(), &mut rng),
            Err(WalkError::NotAMolecule(_))
        ));
        let bad = WalkConfig { length: 1, ..Default::default() };
        assert!(matches!(batch_walks(&g, &[NodeIdx(0)], &bad), Err(WalkError::InvalidLength(1))));
        assert!(batch_walks(&g, &[], &WalkConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn batch_walks_deterministic_per_seed() {
        let g = star();
        let cfg = WalkConfig { length: 6, walks_per_molecule: 3, seed: 5, ..Default::default() };
        let starts = vec![NodeIdx(0); 8];
        let a = batch_walks(&g, &starts, &cfg).unwrap();
        assert_eq!(a.len(), 24);
        assert_eq!(a, batch_walks(&g, &starts, &cfg).unwrap());
        let other = WalkConfig { seed: 6, ..cfg.clone() };
        assert_ne!(a, batch_walks(&g, &starts, &other).unwrap());
        assert!(a.iter().all(|p| p.len() == 6 && !p.truncated));
    }
}
