//! Synthetic context graphs with planted cluster structure.
//!
//! Every molecule is a cluster motif with random side chains. Its
//! morphology and gene-expression profiles are the cluster centroid plus
//! Gaussian noise, joined to the molecule by perturbation edges. The
//! downstream label of a molecule is its cluster; no structure is shared
//! between clusters.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctxgraph::tables::BuildOptions;
use crate::molparse::{graph_signature, parse_smiles};
use crate::rng::{derive_seed, stream_rng, tag};

/// Motif templates; `*` marks where a random side chain is attached and
/// `|` separates alternatives drawn uniformly per molecule.
pub const DEFAULT_MOTIFS: [&str; 8] = [
    "*c1ccc(O)c(N)c1",
    "*c1cc(N)ccc1O",
    "*c1ccc(S)cc1",
    "*C1CCN(*)CC1",
    "*c1ccncc1",
    "*C(=O)N*",
    "*c1ccoc1",
    "*C1CC1*",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error("generated SMILES {smiles:?} failed to parse: {msg}")]
    BadSmiles { smiles: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub molecules_per_cluster: usize,
    /// Standard deviation of the Gaussian noise added to profile centroids.
    pub noise: f64,
    /// One motif template per cluster; defaults to [`DEFAULT_MOTIFS`].
    pub motifs: Option<Vec<String>>,
    pub morphology_dim: usize,
    pub expression_dim: usize,
    /// Featureless gene nodes; profile position `i < genes` maps to gene `i`.
    pub genes: usize,
    /// Side-chain length range, inclusive.
    pub chain_min: usize,
    pub chain_max: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clusters: 2,
            molecules_per_cluster: 100,
            noise: 0.1,
            motifs: None,
            morphology_dim: 128,
            expression_dim: 64,
            genes: 8,
            chain_min: 1,
            chain_max: 6,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.clusters < 2 {
            return bad("need at least 2 clusters");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be finite and >= 0");
        }
        if self.molecules_per_cluster == 0 || self.morphology_dim == 0 {
            return bad("molecule count and morphology dimension must be positive");
        }
        if self.chain_min == 0 || self.chain_max < self.chain_min {
            return bad("side-chain range must satisfy 1 <= chain_min <= chain_max");
        }
        let motifs = self.motif_list();
        if motifs.len() < self.clusters {
            return bad("fewer motifs than clusters");
        }
        if motifs
            .iter()
            .take(self.clusters)
            .any(|m| m.split('|').any(|alt| !alt.contains('*')))
        {
            return bad("every motif needs at least one '*' attachment point");
        }
        Ok(())
    }

    pub fn motif_list(&self) -> Vec<String> {
        match &self.motifs {
            Some(m) => m.clone(),
            None => DEFAULT_MOTIFS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn molecule_count(&self) -> usize {
        self.clusters * self.molecules_per_cluster
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMolecule {
    pub id: String,
    pub smiles: String,
    pub cluster: usize,
}

/// Generated tables plus what the generator planted.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub nodes_tsv: String,
    pub edges_tsv: String,
    pub labels_tsv: String,
    pub landmark_genes: Vec<String>,
    pub molecules: Vec<SynthMolecule>,
    /// `(morphology id, profile)` for each molecule, same order.
    pub morphology: Vec<(String, Vec<f64>)>,
}

impl SynthData {
    /// Build options that turn expression profiles into gene links.
    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            landmark_genes: Some(self.landmark_genes.clone()),
            ..BuildOptions::default()
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.molecules.iter().map(|m| m.cluster).collect()
    }
}

const CHAIN_UNITS: [&str; 12] = [
    "C", "C", "C", "C", "N", "O", "S", "C(C)", "C(O)", "C(=O)", "C2CC2", "c2ccccc2",
];
const MAX_REDRAWS: usize = 1000;
const CAPS: [&str; 8] = ["C", "O", "N", "F", "Cl", "Br", "C(F)(F)F", "C#N"];

/// Chain of random units ending (or, with `cap_first`, starting) in a cap.
fn side_chain<R: Rng + ?Sized>(len: usize, cap_first: bool, rng: &mut R) -> String {
    let mut units: Vec<&str> = (1..len)
        .map(|_| CHAIN_UNITS[rng.random_range(0..CHAIN_UNITS.len())])
        .collect();
    let cap = CAPS[rng.random_range(0..CAPS.len())];
    if cap_first {
        // A leading cap must stay a single atom so the chain bonds onward.
        let cap = ["C", "O", "N", "F", "Cl"][rng.random_range(0..5)];
        units.insert(0, cap);
    } else {
        units.push(cap);
    }
    units.concat()
}

/// Replaces each `*` with a side chain. A leading chain bonds to the motif
/// through its last atom, any other through its first.
fn decorate<R: Rng + ?Sized>(motif: &str, spec: &SyntheticSpec, rng: &mut R) -> String {
    let mut out = String::new();
    for (i, ch) in motif.chars().enumerate() {
        if ch == '*' {
            let len = rng.random_range(spec.chain_min..=spec.chain_max);
            out.push_str(&side_chain(len, i == 0, rng));
        } else {
            out.push(ch);
        }
    }
    out
}

fn fmt_row(out: &mut String, id: &str, kind: &str, values: &[f64]) {
    let _ = write!(out, "{id}\t{kind}\tsynth");
    for v in values {
        let _ = write!(out, "\t{v}");
    }
    out.push('\n');
}

pub fn generate(spec: &SyntheticSpec) -> Result<SynthData, SynthError> {
    spec.validate()?;
    let motifs = spec.motif_list();
    let mut centroid_rng = stream_rng(derive_seed(spec.seed, tag::SYNTH, 0), 0);
    let morph_centroids: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| (0..spec.morphology_dim).map(|_| centroid_rng.random::<f64>()).collect())
        .collect();
    let expr_centroids: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| {
            (0..spec.expression_dim)
                .map(|_| centroid_rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut mol_rng = stream_rng(derive_seed(spec.seed, tag::SYNTH, 1), 0);
    let mut noise_rng = stream_rng(derive_seed(spec.seed, tag::SYNTH, 2), 0);
    let mut jitter = |c: &[f64]| -> Vec<f64> {
        c.iter()
            .map(|&x| if spec.noise == 0.0 { x } else { x + noise.sample(&mut noise_rng) })
            .collect()
    };

    let landmark_genes: Vec<String> = (0..spec.expression_dim)
        .map(|i| if i < spec.genes { format!("gene{i}") } else { format!("lm{i}") })
        .collect();

    let mut nodes = String::from("id\tkind\tsource_tag\tvalues\n");
    let mut edges = String::from("src_id\tdst_id\trelation\tweight\n");
    let mut labels = String::new();
    if spec.clusters == 2 {
        labels.push_str("id\tcluster\n");
    } else {
        labels.push_str("id");
        for c in 0..spec.clusters {
            let _ = write!(labels, "\tcluster_{c}");
        }
        labels.push('\n');
    }
    for g in 0..spec.genes.min(spec.expression_dim) {
        let _ = writeln!(nodes, "gene{g}\tgene\tsynth");
    }

    let mut molecules = Vec::with_capacity(spec.molecule_count());
    let mut morphology = Vec::with_capacity(spec.molecule_count());
    let mut seen = HashMap::new();
    let mut idx = 0;
    for _ in 0..spec.molecules_per_cluster {
        for c in 0..spec.clusters {
            let id = format!("mol{idx:04}");
            let options: Vec<&str> = motifs[c].split('|').collect();
            let motif = options[mol_rng.random_range(0..options.len())];
            // Two motifs can decorate to the same molecule; redraw it rather
            // than give one structure two labels.
            let mut attempts = 0;
            let smiles = loop {
                let smiles = decorate(motif, spec, &mut mol_rng);
                let g = parse_smiles(&smiles).map_err(|e| SynthError::BadSmiles {
                    smiles: smiles.clone(),
                    msg: e.to_string(),
                })?;
                if *seen.entry(graph_signature(&g)).or_insert(c) == c {
                    break smiles;
                }
                attempts += 1;
                if attempts == MAX_REDRAWS {
                    return Err(SynthError::Invalid(format!(
                        "could not draw a molecule unique to cluster {c} after {MAX_REDRAWS} attempts"
                    )));
                }
            };
            let _ = writeln!(nodes, "{id}\tmolecule\tsynth\t{smiles}");
            let morph_id = format!("morph{idx:04}");
            let morph = jitter(&morph_centroids[c]);
            fmt_row(&mut nodes, &morph_id, "cell_morphology", &morph);
            let _ = writeln!(edges, "{id}\t{morph_id}\tperturbation\t1");
            if spec.expression_dim > 0 {
                let expr_id = format!("expr{idx:04}");
                fmt_row(&mut nodes, &expr_id, "gene_expression", &jitter(&expr_centroids[c]));
                let _ = writeln!(edges, "{id}\t{expr_id}\tperturbation\t1");
            }
            if spec.clusters == 2 {
                let _ = writeln!(labels, "{id}\t{c}");
            } else {
                labels.push_str(&id);
                for k in 0..spec.clusters {
                    let _ = write!(labels, "\t{}", u8::from(k == c));
                }
                labels.push('\n');
            }
            molecules.push(SynthMolecule {
                id,
                smiles,
                cluster: c,
            });
            morphology.push((morph_id, morph));
            idx += 1;
        }
    }
    Ok(SynthData {
        nodes_tsv: nodes,
        edges_tsv: edges,
        labels_tsv: labels,
        landmark_genes,
        molecules,
        morphology,
    })
}
