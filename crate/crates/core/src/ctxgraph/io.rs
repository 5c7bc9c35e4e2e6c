//! Binary graph cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    [u8; 4] = "CTXG"
//! version  u32
//! nodes    u64
//! edges    u64
//! checksum u64      FNV-1a over metadata || payload
//! meta_len u64
//! metadata JSON     node ids/kinds/dims/SMILES, edge endpoints/relations
//! payload           f32 features per node in order, then f64 edge weights
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContextGraph, CtxGraphError, NodeKind, NodeRecord, Relation, Result, WeightedEdge};
use crate::hashing::fnv1a64;
use crate::molparse::parse_smiles;

pub const GRAPH_MAGIC: &[u8; 4] = b"CTXG";
pub const GRAPH_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8 + 8;

#[derive(Serialize, Deserialize)]
struct NodeMeta {
    id: String,
    kind: NodeKind,
    source_tag: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    smiles: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct EdgeMeta {
    a: usize,
    b: usize,
    relation: Relation,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    nodes: Vec<NodeMeta>,
    edges: Vec<EdgeMeta>,
}

pub(super) fn encode(g: &ContextGraph) -> Result<(Vec<u8>, u64)> {
    if !g.is_finalized() {
        return Err(CtxGraphError::NotFinalized);
    }
    let nodes = g
        .nodes()
        .iter()
        .map(|n| NodeMeta {
            id: n.id.clone(),
            kind: n.kind,
            source_tag: n.source_tag.clone(),
            dim: n.features.len(),
            smiles: n.smiles.clone(),
        })
        .collect();
    let mut weights = Vec::with_capacity(g.edge_count());
    let edges = g
        .edges()
        .map(|e| {
            weights.push(e.weight);
            EdgeMeta {
                a: g.node_idx(&e.a).expect("edge endpoint").0,
                b: g.node_idx(&e.b).expect("edge endpoint").0,
                relation: e.relation,
            }
        })
        .collect();
    let meta = serde_json::to_vec(&Metadata { nodes, edges })
        .map_err(|e| CtxGraphError::CorruptFile(e.to_string()))?;
    let mut payload = Vec::new();
    for n in g.nodes() {
        for x in &n.features {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    for w in weights {
        payload.extend_from_slice(&w.to_le_bytes());
    }
    let mut body = meta.clone();
    body.extend_from_slice(&payload);
    let checksum = fnv1a64(&body);

    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(GRAPH_MAGIC);
    out.extend_from_slice(&GRAPH_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.node_count() as u64).to_le_bytes());
    out.extend_from_slice(&(g.edge_count() as u64).to_le_bytes());
    out.extend_from_slice(&checksum.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    Ok((out, checksum))
}

pub(super) fn decode(bytes: &[u8]) -> Result<ContextGraph> {
    let corrupt = |m: &str| CtxGraphError::CorruptFile(m.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    if &bytes[0..4] != GRAPH_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != GRAPH_VERSION {
        return Err(CtxGraphError::CorruptFile(format!(
            "unsupported version {version} (expected {GRAPH_VERSION})"
        )));
    }
    let node_count = u64_at(8) as usize;
    let edge_count = u64_at(16) as usize;
    let checksum = u64_at(24);
    let meta_len = u64_at(32) as usize;
    let body = &bytes[HEADER_LEN..];
    if meta_len > body.len() {
        return Err(corrupt("truncated metadata"));
    }
    if fnv1a64(body) != checksum {
        return Err(corrupt("checksum mismatch"));
    }
    let meta: Metadata = serde_json::from_slice(&body[..meta_len])
        .map_err(|e| CtxGraphError::CorruptFile(format!("metadata: {e}")))?;
    if meta.nodes.len() != node_count || meta.edges.len() != edge_count {
        return Err(corrupt("header counts disagree with metadata"));
    }
    let feature_len: usize = meta.nodes.iter().map(|n| n.dim).sum();
    let payload = &body[meta_len..];
    if payload.len() != feature_len * 4 + edge_count * 8 {
        return Err(corrupt("payload length mismatch"));
    }
    let mut cursor = 0usize;
    let mut nodes = Vec::with_capacity(node_count);
    for n in meta.nodes {
        let features: Vec<f32> = payload[cursor..cursor + 4 * n.dim]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        cursor += 4 * n.dim;
        let molecule = match (&n.kind, &n.smiles) {
            (NodeKind::Molecule, Some(s)) => Some(
                parse_smiles(s).map_err(|e| CtxGraphError::CorruptFile(format!("{}: {e}", n.id)))?,
            ),
            (NodeKind::Molecule, None) => return Err(corrupt("molecule node without SMILES")),
            _ => None,
        };
        nodes.push(NodeRecord {
            id: n.id,
            kind: n.kind,
            features,
            source_tag: n.source_tag,
            smiles: n.smiles,
            molecule,
        });
    }
    let mut edges = Vec::with_capacity(edge_count);
    for e in meta.edges {
        let w = f64::from_le_bytes(payload[cursor..cursor + 8].try_into().expect("8 bytes"));
        cursor += 8;
        let (Some(a), Some(b)) = (nodes.get(e.a), nodes.get(e.b)) else {
            return Err(corrupt("edge endpoint out of range"));
        };
        edges.push(WeightedEdge {
            a: a.id.clone(),
            b: b.id.clone(),
            relation: e.relation,
            weight: w,
        });
    }
    ContextGraph::from_parts(nodes, edges).map_err(|e| match e {
        CtxGraphError::CorruptFile(m) => CtxGraphError::CorruptFile(m),
        other => CtxGraphError::CorruptFile(other.to_string()),
    })
}

impl ContextGraph {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode(self).map(|(b, _)| b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ContextGraph> {
        decode(bytes)
    }
}

pub fn save_graph(g: &ContextGraph, path: &Path) -> Result<()> {
    fs::write(path, g.to_bytes()?)?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<ContextGraph> {
    decode(&fs::read(path)?)
}
