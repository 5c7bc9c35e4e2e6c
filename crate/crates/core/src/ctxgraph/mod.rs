//! Weighted heterogeneous context graph over molecules, genes, gene-expression
//! and cell-morphology profiles.
//!
//! A graph is mutable until [`ContextGraph::finalize`]; afterwards it is
//! immutable and exposes an adjacency index where each node pair carries a
//! single effective weight (the maximum over relations).

mod io;
pub mod tables;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{cosine_f32, morgan_fingerprint, FingerprintError};
use crate::molparse::{parse_smiles, MolParseError, MolecularGraph};

pub use io::{load_graph, save_graph, GRAPH_MAGIC, GRAPH_VERSION};

#[derive(Debug, Error)]
pub enum CtxGraphError {
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("graph is finalized")]
    Finalized,
    #[error("graph is not finalized")]
    NotFinalized,
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("self-loop on {0:?}")]
    SelfLoop(String),
    #[error("edge weight {0} outside (0, 1]")]
    InvalidWeight(f64),
    #[error("{kind} nodes have mixed feature dimensions {dims:?}")]
    MixedDimensions { kind: NodeKind, dims: Vec<usize> },
    #[error("cannot merge: {0}")]
    IncompatibleMerge(String),
    #[error("node {id:?} is {found}, expected {expected}")]
    WrongKind {
        id: String,
        expected: NodeKind,
        found: NodeKind,
    },
    #[error("node {0:?} has non-finite features")]
    NonFinite(String),
    #[error("molecule node {0:?} has no molecular graph")]
    MissingMolecule(String),
    #[error("invalid SMILES for {id:?}: {source}")]
    Smiles {
        id: String,
        #[source]
        source: MolParseError,
    },
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error("line {line}: {msg}")]
    Table { line: usize, msg: String },
    #[error("corrupt graph file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CtxGraphError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Molecule,
    Gene,
    GeneExpression,
    CellMorphology,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [
        NodeKind::Molecule,
        NodeKind::Gene,
        NodeKind::GeneExpression,
        NodeKind::CellMorphology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Molecule => "molecule",
            NodeKind::Gene => "gene",
            NodeKind::GeneExpression => "gene_expression",
            NodeKind::CellMorphology => "cell_morphology",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Perturbation,
    Similarity,
    GeneGene,
    GeneMolecule,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::Perturbation,
        Relation::Similarity,
        Relation::GeneGene,
        Relation::GeneMolecule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Perturbation => "perturbation",
            Relation::Similarity => "similarity",
            Relation::GeneGene => "gene_gene",
            Relation::GeneMolecule => "gene_molecule",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown relation {s:?}"))
    }
}

/// Index of a node in a graph. Stable once the graph is finalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeIdx(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: String,
    pub kind: NodeKind,
    pub features: Vec<f32>,
    pub source_tag: String,
    pub smiles: Option<String>,
    pub molecule: Option<MolecularGraph>,
}

impl NodeRecord {
    pub fn new(id: impl Into<String>, kind: NodeKind, features: Vec<f32>) -> Self {
        NodeRecord {
            id: id.into(),
            kind,
            features,
            source_tag: String::new(),
            smiles: None,
            molecule: None,
        }
    }

    /// Molecule node whose features are its Morgan fingerprint bits.
    pub fn molecule(
        id: impl Into<String>,
        smiles: &str,
        radius: usize,
        nbits: usize,
    ) -> Result<Self> {
        let id = id.into();
        let mol = parse_smiles(smiles).map_err(|source| CtxGraphError::Smiles {
            id: id.clone(),
            source,
        })?;
        let features = morgan_fingerprint(&mol, radius, nbits)?.to_features();
        Ok(NodeRecord {
            id,
            kind: NodeKind::Molecule,
            features,
            source_tag: String::new(),
            smiles: Some(smiles.to_string()),
            molecule: Some(mol),
        })
    }

    pub fn with_source(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn modality_dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub a: String,
    pub b: String,
    pub relation: Relation,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub node: NodeIdx,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub threshold: f64,
    pub keep_fraction: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            threshold: 0.8,
            keep_fraction: 0.005,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub nodes_per_kind: BTreeMap<String, usize>,
    pub edges_per_relation: BTreeMap<String, usize>,
}

type EdgeKey = (String, String, Relation);

fn edge_key(a: &str, b: &str, relation: Relation) -> EdgeKey {
    if a <= b {
        (a.to_string(), b.to_string(), relation)
    } else {
        (b.to_string(), a.to_string(), relation)
    }
}

/// Number of top pairs kept for a keep fraction; guards against `ceil` of a
/// product that lands one ulp above an integer.
pub fn keep_count(total_pairs: usize, keep_fraction: f64) -> usize {
    let x = total_pairs as f64 * keep_fraction;
    (x - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Default)]
pub struct ContextGraph {
    nodes: Vec<NodeRecord>,
    index: HashMap<String, usize>,
    edges: BTreeMap<EdgeKey, f64>,
    scaled: bool,
    finalized: bool,
    adjacency: Vec<Vec<Neighbor>>,
    stats: GraphStats,
}

impl PartialEq for ContextGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.finalized == other.finalized
    }
}

impl ContextGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_mutable(&self) -> Result<()> {
        if self.finalized {
            Err(CtxGraphError::Finalized)
        } else {
            Ok(())
        }
    }

    fn lookup(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| CtxGraphError::UnknownNode(id.to_string()))
    }

    pub fn add_node(&mut self, rec: NodeRecord) -> Result<NodeIdx> {
        self.ensure_mutable()?;
        if self.index.contains_key(&rec.id) {
            return Err(CtxGraphError::DuplicateId(rec.id));
        }
        if rec.features.iter().any(|x| !x.is_finite()) {
            return Err(CtxGraphError::NonFinite(rec.id));
        }
        if rec.kind == NodeKind::Molecule && rec.molecule.is_none() {
            return Err(CtxGraphError::MissingMolecule(rec.id));
        }
        let idx = self.nodes.len();
        self.index.insert(rec.id.clone(), idx);
        self.nodes.push(rec);
        self.scaled = false;
        Ok(NodeIdx(idx))
    }

    /// Adds (or raises to `weight`) an edge of the given relation.
    pub fn add_edge(&mut self, a: &str, b: &str, relation: Relation, weight: f64) -> Result<()> {
        self.ensure_mutable()?;
        self.lookup(a)?;
        self.lookup(b)?;
        if a == b {
            return Err(CtxGraphError::SelfLoop(a.to_string()));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(CtxGraphError::InvalidWeight(weight));
        }
        let slot = self.edges.entry(edge_key(a, b, relation)).or_insert(weight);
        *slot = slot.max(weight);
        Ok(())
    }

    /// Perturbation edges always carry weight 1.
    pub fn add_perturbation_edge(&mut self, a: &str, b: &str) -> Result<()> {
        self.add_edge(a, b, Relation::Perturbation, 1.0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, idx: NodeIdx) -> &NodeRecord {
        &self.nodes[idx.0]
    }

    pub fn node_idx(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied().map(NodeIdx)
    }

    pub fn node_by_id(&self, id: &str) -> Option<&NodeRecord> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    /// All edges ordered by `(a, b, relation)` with `a <= b`.
    pub fn edges(&self) -> impl Iterator<Item = WeightedEdge> + '_ {
        self.edges.iter().map(|((a, b, r), &w)| WeightedEdge {
            a: a.clone(),
            b: b.clone(),
            relation: *r,
            weight: w,
        })
    }

    pub fn edge_weight(&self, a: &str, b: &str, relation: Relation) -> Option<f64> {
        self.edges.get(&edge_key(a, b, relation)).copied()
    }

    pub fn molecule_nodes(&self) -> impl Iterator<Item = NodeIdx> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Molecule)
            .map(|(i, _)| NodeIdx(i))
    }

    /// Effective neighbors of a finalized graph, sorted by node index.
    pub fn neighbors(&self, idx: NodeIdx) -> Result<&[Neighbor]> {
        if !self.finalized {
            return Err(CtxGraphError::NotFinalized);
        }
        Ok(&self.adjacency[idx.0])
    }

    pub fn stats(&self) -> &GraphStats {
        &self.stats
    }

    /// Min-max scales every non-molecule feature group (grouped by feature
    /// space and dimension) column-wise into `[0, 1]`. Idempotent until the
    /// next node insertion.
    pub fn scale_features(&mut self) -> Result<()> {
        self.ensure_mutable()?;
        if self.scaled {
            return Ok(());
        }
        let mut groups: BTreeMap<(u8, usize), Vec<usize>> = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let space = match n.kind {
                NodeKind::Molecule => continue,
                NodeKind::GeneExpression => 0u8,
                NodeKind::CellMorphology | NodeKind::Gene => 1u8,
            };
            if n.features.is_empty() {
                continue;
            }
            groups.entry((space, n.features.len())).or_default().push(i);
        }
        for members in groups.values() {
            let rows: Vec<Vec<f64>> = members
                .iter()
                .map(|&i| self.nodes[i].features.iter().map(|&x| f64::from(x)).collect())
                .collect();
            let scaled = min_max_scale(&rows);
            for (&i, row) in members.iter().zip(scaled) {
                self.nodes[i].features = row.into_iter().map(|x| x as f32).collect();
            }
        }
        self.scaled = true;
        Ok(())
    }

    fn dims_of(&self, kind: NodeKind) -> Vec<usize> {
        let mut dims: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.kind == kind)
            .map(|n| n.features.len())
            .collect();
        dims.sort_unstable();
        dims.dedup();
        dims
    }

    /// Cosine similarity edges within one node kind. All nodes of the kind
    /// must share a dimension; see [`Self::build_similarity_edges_for_dim`]
    /// for mixed kinds.
    pub fn build_similarity_edges(
        &mut self,
        kind: NodeKind,
        params: SimilarityParams,
    ) -> Result<usize> {
        self.ensure_mutable()?;
        let dims = self.dims_of(kind);
        match dims.as_slice() {
            [] => Ok(0),
            [dim] => self.build_similarity_edges_for_dim(kind, *dim, params),
            _ => Err(CtxGraphError::MixedDimensions { kind, dims }),
        }
    }

    /// Candidates are intra-group pairs with cosine `>= threshold`; of those,
    /// the top `keep_count(total pairs, keep_fraction)` by similarity are
    /// kept, ties broken by lexicographic id pair. Returns the number of new edges.
    pub fn build_similarity_edges_for_dim(
        &mut self,
        kind: NodeKind,
        dim: usize,
        params: SimilarityParams,
    ) -> Result<usize> {
        self.ensure_mutable()?;
        if dim == 0 {
            return Ok(0);
        }
        let members: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == kind && n.features.len() == dim)
            .map(|(i, _)| i)
            .collect();
        let n = members.len();
        let total = n * n.saturating_sub(1) / 2;
        let keep = keep_count(total, params.keep_fraction);
        let mut candidates: Vec<(f64, &str, &str)> = Vec::new();
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let (ni, nj) = (&self.nodes[i], &self.nodes[j]);
                let Ok(c) = cosine_f32(&ni.features, &nj.features) else {
                    continue;
                };
                if c >= params.threshold && c > 0.0 {
                    let (a, b) = if ni.id <= nj.id {
                        (ni.id.as_str(), nj.id.as_str())
                    } else {
                        (nj.id.as_str(), ni.id.as_str())
                    };
                    candidates.push((c, a, b));
                }
            }
        }
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| (x.1, x.2).cmp(&(y.1, y.2))));
        candidates.truncate(keep);
        let chosen: Vec<(String, String, f64)> = candidates
            .into_iter()
            .map(|(c, a, b)| (a.to_string(), b.to_string(), c))
            .collect();
        let mut added = 0;
        for (a, b, c) in chosen {
            if self.edge_weight(&a, &b, Relation::Similarity).is_none() {
                added += 1;
            }
            self.add_edge(&a, &b, Relation::Similarity, c)?;
        }
        Ok(added)
    }

    /// Folds a featureless gene node and its genetic-perturbation morphology
    /// node into one gene node carrying the morphology features. Returns the
    /// surviving (gene) id.
    pub fn merge_gene_morphology(&mut self, gene_id: &str, morph_id: &str) -> Result<String> {
        self.ensure_mutable()?;
        let gi = self.lookup(gene_id)?;
        let mi = self.lookup(morph_id)?;
        let (gene, morph) = (&self.nodes[gi], &self.nodes[mi]);
        if gene.kind != NodeKind::Gene {
            return Err(CtxGraphError::IncompatibleMerge(format!(
                "{gene_id:?} is {}, not gene",
                gene.kind
            )));
        }
        if !gene.features.is_empty() {
            return Err(CtxGraphError::IncompatibleMerge(format!(
                "gene {gene_id:?} already has features"
            )));
        }
        if morph.kind != NodeKind::CellMorphology {
            return Err(CtxGraphError::IncompatibleMerge(format!(
                "{morph_id:?} is {}, not cell_morphology",
                morph.kind
            )));
        }
        if self
            .edge_weight(gene_id, morph_id, Relation::Perturbation)
            .is_none()
        {
            return Err(CtxGraphError::IncompatibleMerge(format!(
                "{gene_id:?} and {morph_id:?} share no perturbation edge"
            )));
        }

        let features = morph.features.clone();
        let old_edges = std::mem::take(&mut self.edges);
        for ((a, b, rel), w) in old_edges {
            let a = if a == morph_id { gene_id.to_string() } else { a };
            let b = if b == morph_id { gene_id.to_string() } else { b };
            if a == b {
                continue;
            }
            let slot = self.edges.entry(edge_key(&a, &b, rel)).or_insert(w);
            *slot = slot.max(w);
        }
        let morph_source = self.nodes[mi].source_tag.clone();
        self.nodes.remove(mi);
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let gi = self.lookup(gene_id)?;
        let gene = &mut self.nodes[gi];
        gene.features = features;
        if !morph_source.is_empty() && gene.source_tag != morph_source {
            gene.source_tag = if gene.source_tag.is_empty() {
                morph_source
            } else {
                format!("{}+{}", gene.source_tag, morph_source)
            };
        }
        self.scaled = false;
        Ok(gene_id.to_string())
    }

    /// Adds a gene-expression node for `molecule_id` with a weight-1
    /// perturbation edge, plus gene-molecule links for the strongest profile
    /// entries (see [`Self::add_gene_molecule_links`]).
    pub fn attach_gene_expression_node(
        &mut self,
        molecule_id: &str,
        expression_id: &str,
        profile: &[f64],
        landmark_genes: &[String],
        top_fraction: f64,
    ) -> Result<NodeIdx> {
        self.ensure_mutable()?;
        let mi = self.lookup(molecule_id)?;
        if self.nodes[mi].kind != NodeKind::Molecule {
            return Err(CtxGraphError::WrongKind {
                id: molecule_id.to_string(),
                expected: NodeKind::Molecule,
                found: self.nodes[mi].kind,
            });
        }
        if profile.iter().any(|x| !x.is_finite()) {
            return Err(CtxGraphError::NonFinite(expression_id.to_string()));
        }
        let rec = NodeRecord::new(
            expression_id,
            NodeKind::GeneExpression,
            profile.iter().map(|&x| x as f32).collect(),
        );
        let idx = self.add_node(rec)?;
        self.add_perturbation_edge(molecule_id, expression_id)?;
        self.add_gene_molecule_links(molecule_id, profile, landmark_genes, top_fraction)?;
        Ok(idx)
    }

    /// Links the molecule to the genes of the top `ceil(top_fraction * len)`
    /// absolute profile entries (ties by position, zeros excluded). Entry `i`
    /// maps to gene `landmark_genes[i]`; entries without an existing gene
    /// node are skipped. Weight is `|v_i| / max |v|`. Returns links added.
    pub fn add_gene_molecule_links(
        &mut self,
        molecule_id: &str,
        profile: &[f64],
        landmark_genes: &[String],
        top_fraction: f64,
    ) -> Result<usize> {
        self.ensure_mutable()?;
        self.lookup(molecule_id)?;
        let picks = top_abs_entries(profile, top_fraction);
        let max_abs = profile.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut added = 0;
        for i in picks {
            let Some(gene) = landmark_genes.get(i) else {
                continue;
            };
            let is_gene = self
                .node_by_id(gene)
                .is_some_and(|n| n.kind == NodeKind::Gene);
            if !is_gene {
                continue;
            }
            let w = (profile[i].abs() / max_abs).min(1.0);
            self.add_edge(molecule_id, gene, Relation::GeneMolecule, w)?;
            added += 1;
        }
        Ok(added)
    }

    /// Scales features (if needed), freezes the adjacency index and computes
    /// summary statistics. Idempotent.
    pub fn finalize(&mut self) -> Result<()> {
        if self.finalized {
            return Ok(());
        }
        self.scale_features()?;
        self.rebuild_index();
        self.finalized = true;
        Ok(())
    }

    fn rebuild_index(&mut self) {
        let n = self.nodes.len();
        let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for ((a, b, _), &w) in &self.edges {
            let (ia, ib) = (self.index[a], self.index[b]);
            let key = (ia.min(ib), ia.max(ib));
            let slot = best.entry(key).or_insert(w);
            *slot = slot.max(w);
        }
        let mut adjacency = vec![Vec::new(); n];
        for (&(a, b), &w) in &best {
            adjacency[a].push(Neighbor {
                node: NodeIdx(b),
                weight: w,
            });
            adjacency[b].push(Neighbor {
                node: NodeIdx(a),
                weight: w,
            });
        }
        for list in &mut adjacency {
            list.sort_by_key(|nb| nb.node);
        }
        self.adjacency = adjacency;

        let mut stats = GraphStats {
            node_count: n,
            edge_count: self.edges.len(),
            ..Default::default()
        };
        for k in NodeKind::ALL {
            stats.nodes_per_kind.insert(k.as_str().into(), 0);
        }
        for r in Relation::ALL {
            stats.edges_per_relation.insert(r.as_str().into(), 0);
        }
        for node in &self.nodes {
            *stats.nodes_per_kind.get_mut(node.kind.as_str()).expect("all kinds") += 1;
        }
        for (_, _, r) in self.edges.keys() {
            *stats.edges_per_relation.get_mut(r.as_str()).expect("all relations") += 1;
        }
        self.stats = stats;
    }

    /// Checksum of the canonical serialization; identifies a finalized graph.
    pub fn checksum(&self) -> Result<u64> {
        io::encode(self).map(|(_, checksum)| checksum)
    }

    pub(crate) fn from_parts(nodes: Vec<NodeRecord>, edges: Vec<WeightedEdge>) -> Result<Self> {
        let mut g = ContextGraph::new();
        for n in nodes {
            g.add_node(n)?;
        }
        for e in edges {
            g.add_edge(&e.a, &e.b, e.relation, e.weight)?;
        }
        g.scaled = true;
        g.finalize()?;
        Ok(g)
    }
}

/// Indices of the top `ceil(fraction * len)` entries by absolute value,
/// zeros excluded, ties broken by lower index.
pub fn top_abs_entries(profile: &[f64], fraction: f64) -> Vec<usize> {
    let k = keep_count(profile.len(), fraction);
    let mut order: Vec<usize> = (0..profile.len()).filter(|&i| profile[i] != 0.0).collect();
    order.sort_by(|&i, &j| profile[j].abs().total_cmp(&profile[i].abs()).then(i.cmp(&j)));
    order.truncate(k);
    order
}

/// Column-wise min-max scaling of a row-major matrix into `[0, 1]`.
/// Constant columns map to zero.
pub fn min_max_scale(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let cols = first.len();
    let mut lo = vec![f64::INFINITY; cols];
    let mut hi = vec![f64::NEG_INFINITY; cols];
    for row in rows {
        for (c, &x) in row.iter().enumerate() {
            lo[c] = lo[c].min(x);
            hi[c] = hi[c].max(x);
        }
    }
    rows.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, &x)| {
                    let span = hi[c] - lo[c];
                    if span > 0.0 {
                        ((x - lo[c]) / span).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}
