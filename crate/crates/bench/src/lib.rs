//! Fixtures shared by the benchmarks.

use infoalign_core::ctxgraph::tables::build_from_tables;
use infoalign_core::ctxgraph::{ContextGraph, NodeKind, NodeRecord};
use infoalign_core::molparse::{parse_smiles, MolecularGraph};
use infoalign_core::synth::{generate, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SMILES: [&str; 6] = [
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "OC(=O)CCc1ccc(O)c(N)c1",
    "Clc1ccc(cc1)C(c1ccccc1)N1CCN(CC1)CCOCCO",
    "C1CCN(CC1)c1ccncc1",
];

pub fn molecules() -> Vec<MolecularGraph> {
    SMILES.iter().map(|s| parse_smiles(s).expect("fixture parses")).collect()
}

/// The default synthetic graph with `per_cluster` molecules in each cluster.
pub fn synthetic_graph(per_cluster: usize) -> ContextGraph {
    let data = generate(&SyntheticSpec {
        molecules_per_cluster: per_cluster,
        ..SyntheticSpec::default()
    })
    .expect("valid spec");
    build_from_tables(&data.nodes_tsv, &data.edges_tsv, &data.build_options()).expect("graph builds")
}

/// `n` morphology nodes with random features and no edges.
pub fn feature_nodes(n: usize, dim: usize, seed: u64) -> ContextGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = ContextGraph::new();
    for i in 0..n {
        let f = (0..dim).map(|_| rng.random::<f32>()).collect();
        g.add_node(NodeRecord::new(format!("n{i}"), NodeKind::CellMorphology, f))
            .expect("unique id");
    }
    g
}
