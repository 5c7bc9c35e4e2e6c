//! TSV node/edge tables and the full graph build pipeline.
//!
//! Node table: `id  kind  source_tag  values...`; molecule rows carry one
//! SMILES column instead of feature values. Edge table:
//! `src_id  dst_id  relation  weight` (weight forced to 1 for perturbation
//! rows). Blank lines and `#` comments are skipped, as is a leading header
//! row whose first field is `id` / `src_id`.

use serde::{Deserialize, Serialize};

use super::{
    ContextGraph, CtxGraphError, NodeKind, NodeRecord, Relation, Result, SimilarityParams,
};
use crate::fingerprint::{DEFAULT_NBITS, DEFAULT_RADIUS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub fp_radius: usize,
    pub fp_bits: usize,
    pub similarity: SimilarityParams,
    pub similarity_kinds: Vec<NodeKind>,
    /// Fraction of strongest expression entries turned into gene-molecule links.
    pub top_fraction: f64,
    /// Gene id for each gene-expression profile position, if known.
    pub landmark_genes: Option<Vec<String>>,
    /// Merge featureless genes with their single genetic-perturbation morphology node.
    pub merge_genetic_perturbations: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            fp_radius: DEFAULT_RADIUS,
            fp_bits: DEFAULT_NBITS,
            similarity: SimilarityParams::default(),
            similarity_kinds: NodeKind::ALL.to_vec(),
            top_fraction: 0.01,
            landmark_genes: None,
            merge_genetic_perturbations: true,
        }
    }
}

fn rows<'a>(text: &'a str, header: &str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    let header = header.to_string();
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches(['\r', '\n'])))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split('\t').collect::<Vec<_>>()))
        .enumerate()
        .filter(move |(k, (_, f))| !(*k == 0 && f[0] == header))
        .map(|(_, r)| r)
}

fn table_err(line: usize, msg: impl Into<String>) -> CtxGraphError {
    CtxGraphError::Table {
        line,
        msg: msg.into(),
    }
}

pub fn parse_node_table(text: &str, fp_radius: usize, fp_bits: usize) -> Result<Vec<NodeRecord>> {
    let mut out = Vec::new();
    for (line, f) in rows(text, "id") {
        if f.len() < 3 {
            return Err(table_err(line, "expected at least id, kind, source_tag"));
        }
        let kind: NodeKind = f[1].parse().map_err(|m: String| table_err(line, m))?;
        let rec = if kind == NodeKind::Molecule {
            if f.len() != 4 {
                return Err(table_err(line, "molecule rows need exactly one SMILES column"));
            }
            NodeRecord::molecule(f[0], f[3], fp_radius, fp_bits).map_err(|e| table_err(line, e.to_string()))?
        } else {
            let features = f[3..]
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    v.trim()
                        .parse::<f32>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| table_err(line, format!("bad feature value {v:?} in column {}", c + 4)))
                })
                .collect::<Result<Vec<f32>>>()?;
            NodeRecord::new(f[0], kind, features)
        };
        out.push(rec.with_source(f[2]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRow {
    pub line: usize,
    pub src: String,
    pub dst: String,
    pub relation: Relation,
    pub weight: f64,
}

pub fn parse_edge_table(text: &str) -> Result<Vec<EdgeRow>> {
    let mut out = Vec::new();
    for (line, f) in rows(text, "src_id") {
        if f.len() != 4 {
            return Err(table_err(line, "expected src_id, dst_id, relation, weight"));
        }
        let relation: Relation = f[2].parse().map_err(|m: String| table_err(line, m))?;
        let weight = if relation == Relation::Perturbation {
            1.0
        } else {
            f[3].trim()
                .parse::<f64>()
                .ok()
                .filter(|w| *w > 0.0 && *w <= 1.0)
                .ok_or_else(|| table_err(line, format!("malformed weight {:?}", f[3])))?
        };
        out.push(EdgeRow {
            line,
            src: f[0].to_string(),
            dst: f[1].to_string(),
            relation,
            weight,
        });
    }
    Ok(out)
}

/// Builds, scales, enriches and finalizes a graph from table text.
pub fn build_from_tables(nodes: &str, edges: &str, opts: &BuildOptions) -> Result<ContextGraph> {
    let mut g = ContextGraph::new();
    for rec in parse_node_table(nodes, opts.fp_radius, opts.fp_bits)? {
        g.add_node(rec)?;
    }
    for e in parse_edge_table(edges)? {
        g.add_edge(&e.src, &e.dst, e.relation, e.weight)
            .map_err(|err| table_err(e.line, err.to_string()))?;
    }

    if opts.merge_genetic_perturbations {
        let mut merges = Vec::new();
        for gene in g.nodes().iter().filter(|n| n.kind == NodeKind::Gene && n.features.is_empty()) {
            let morphs: Vec<&str> = g
                .edges()
                .filter_map(|e| {
                    if e.relation != Relation::Perturbation {
                        return None;
                    }
                    let other = if e.a == gene.id { &e.b } else if e.b == gene.id { &e.a } else { return None };
                    let node = g.node_by_id(other)?;
                    (node.kind == NodeKind::CellMorphology).then_some(node.id.as_str())
                })
                .collect();
            if let [m] = morphs.as_slice() {
                merges.push((gene.id.clone(), m.to_string()));
            }
        }
        for (gene, morph) in merges {
            // A morphology node claimed by two genes is merged into the first only.
            if g.node_by_id(&morph).is_some() {
                g.merge_gene_morphology(&gene, &morph)?;
            }
        }
    }

    if let Some(genes) = &opts.landmark_genes {
        let mut links = Vec::new();
        for e in g.edges().filter(|e| e.relation == Relation::Perturbation) {
            let (Some(a), Some(b)) = (g.node_by_id(&e.a), g.node_by_id(&e.b)) else {
                continue;
            };
            let pair = match (a.kind, b.kind) {
                (NodeKind::Molecule, NodeKind::GeneExpression) => Some((a, b)),
                (NodeKind::GeneExpression, NodeKind::Molecule) => Some((b, a)),
                _ => None,
            };
            if let Some((mol, expr)) = pair {
                let profile: Vec<f64> = expr.features.iter().map(|&x| f64::from(x)).collect();
                links.push((mol.id.clone(), profile));
            }
        }
        for (mol, profile) in links {
            g.add_gene_molecule_links(&mol, &profile, genes, opts.top_fraction)?;
        }
    }

    g.scale_features()?;
    for &kind in &opts.similarity_kinds {
        let mut dims: Vec<usize> = g.nodes().iter().filter(|n| n.kind == kind).map(|n| n.features.len()).collect();
        dims.sort_unstable();
        dims.dedup();
        for dim in dims {
            g.build_similarity_edges_for_dim(kind, dim, opts.similarity)?;
        }
    }
    g.finalize()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODES: &str = "id\tkind\tsource_tag\tvalues\n\
        m1\tmolecule\ttoy\tCCO\n\
        m2\tmolecule\ttoy\tc1ccccc1\n\
        c1\tcell_morphology\ttoy\t0.1\t0.5\t0.9\n\
        c2\tcell_morphology\ttoy\t0.3\t0.2\t0.4\n\
        e1\tgene_expression\ttoy\t1.0\t-2.0\n";
    const EDGES: &str = "src_id\tdst_id\trelation\tweight\n\
        m1\tc1\tperturbation\t0.3\n\
        m2\tc2\tperturbation\t\n\
        m1\te1\tperturbation\t1\n\
        c1\tc2\tgene_gene\t0.5\n";

    #[test]
    fn toy_tables_build() {
        let opts = BuildOptions {
            similarity_kinds: vec![],
            ..Default::default()
        };
        let g = build_from_tables(NODES, EDGES, &opts).unwrap();
        let s = g.stats();
        assert_eq!(s.node_count, 5);
        assert_eq!(s.edge_count, 4);
        assert_eq!(s.nodes_per_kind["molecule"], 2);
        assert_eq!(s.nodes_per_kind["cell_morphology"], 2);
        assert_eq!(s.edges_per_relation["perturbation"], 3);
        assert_eq!(g.edge_weight("m1", "c1", Relation::Perturbation), Some(1.0));
        for n in g.nodes() {
            assert!(n.features.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn malformed_weight_names_line() {
        let edges = "m1\tc1\tperturbation\t1\nc1\tc2\tgene_gene\tabc\n";
        match build_from_tables(NODES, edges, &BuildOptions::default()) {
            Err(CtxGraphError::Table { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("weight"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let edges = "c1\tc2\tgene_gene\t1.5\n";
        assert!(matches!(
            build_from_tables(NODES, edges, &BuildOptions::default()),
            Err(CtxGraphError::Table { line: 1, .. })
        ));
    }

    #[test]
    fn bad_node_rows() {
        assert!(matches!(
            parse_node_table("x\tplanet\tt\t1\n", 2, 64),
            Err(CtxGraphError::Table { line: 1, .. })
        ));
        assert!(matches!(
            parse_node_table("x\tcell_morphology\tt\t1\tnan\n", 2, 64),
            Err(CtxGraphError::Table { line: 1, .. })
        ));
        assert!(matches!(
            parse_node_table("# c\nx\tmolecule\tt\tC1CC\n", 2, 64),
            Err(CtxGraphError::Table { line: 2, .. })
        ));
    }

    #[test]
    fn genetic_perturbations_merge_and_landmarks_link() {
        let nodes = "m1\tmolecule\tt\tCCN\n\
            g1\tgene\tjump\n\
            g2\tgene\tlincs\n\
            c1\tcell_morphology\tjump\t0.2\t0.4\n\
            e1\tgene_expression\tlincs\t0.1\t-3.0\t0.0\n";
        let edges = "g1\tc1\tperturbation\t1\nm1\te1\tperturbation\t1\n";
        let opts = BuildOptions {
            landmark_genes: Some(vec!["g0".into(), "g2".into(), "g1".into()]),
            top_fraction: 0.34,
            ..Default::default()
        };
        let g = build_from_tables(nodes, edges, &opts).unwrap();
        assert!(g.node_by_id("c1").is_none());
        assert_eq!(g.node_by_id("g1").unwrap().modality_dim(), 2);
        // ceil(0.34 * 3) = 2 entries: positions 1 (|-3|) and 0 (0.1); only position 1 maps to a gene.
        assert_eq!(g.edge_weight("m1", "g2", Relation::GeneMolecule), Some(1.0));
        assert_eq!(g.stats().edges_per_relation["gene_molecule"], 1);
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let a = build_from_tables(NODES, EDGES, &BuildOptions::default()).unwrap();
        let b = build_from_tables(NODES, EDGES, &BuildOptions::default()).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    }
}
