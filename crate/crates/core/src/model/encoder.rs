use rand::Rng;

use super::{InfoAlign, ModelConfig, Result, LOGVAR_BOUND};
use crate::diffcore::{Activation, DenseArray, Mlp, ParamId, ParamStore, Tape, Var};
use crate::molparse::{BondOrder, Element, MolecularGraph};

/// Element one-hot, aromatic flag, formal charge one-hot over `-2..=2` (clamped).
pub const ATOM_FEATURES: usize = Element::ALL.len() + 1 + 5;
const BOND_TYPES: usize = BondOrder::ALL.len();

pub fn atom_features(g: &MolecularGraph) -> DenseArray {
    let mut out = DenseArray::zeros(g.atom_count(), ATOM_FEATURES);
    for (i, a) in g.atoms().iter().enumerate() {
        out.set(i, a.element.ordinal(), 1.0);
        if a.aromatic {
            out.set(i, Element::ALL.len(), 1.0);
        }
        let charge = (i32::from(a.formal_charge).clamp(-2, 2) + 2) as usize;
        out.set(i, Element::ALL.len() + 1 + charge, 1.0);
    }
    out
}

/// Several molecules as one disjoint graph.
#[derive(Debug, Clone)]
pub struct MolBatch {
    pub features: DenseArray,
    /// Directed message edges, both directions of every bond.
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub bond_onehot: DenseArray,
    /// Molecule index of every atom.
    pub owner: Vec<usize>,
    pub molecules: usize,
}

impl MolBatch {
    pub fn new(graphs: &[&MolecularGraph]) -> Self {
        let atoms: usize = graphs.iter().map(|g| g.atom_count()).sum();
        let edges: usize = graphs.iter().map(|g| 2 * g.bond_count()).sum();
        let mut feat = Vec::with_capacity(atoms * ATOM_FEATURES);
        let (mut src, mut dst) = (Vec::with_capacity(edges), Vec::with_capacity(edges));
        let mut bonds = vec![0.0; edges * BOND_TYPES];
        let mut owner = Vec::with_capacity(atoms);
        let mut offset = 0;
        for (m, g) in graphs.iter().enumerate() {
            feat.extend_from_slice(atom_features(g).data());
            owner.extend(std::iter::repeat_n(m, g.atom_count()));
            for b in g.bonds() {
                for (u, v) in [(b.a, b.b), (b.b, b.a)] {
                    bonds[src.len() * BOND_TYPES + b.order.ordinal()] = 1.0;
                    src.push(offset + u);
                    dst.push(offset + v);
                }
            }
            offset += g.atom_count();
        }
        MolBatch {
            features: DenseArray::new(vec![atoms, ATOM_FEATURES], feat).expect("shape"),
            src,
            dst,
            bond_onehot: DenseArray::new(vec![edges, BOND_TYPES], bonds).expect("shape"),
            owner,
            molecules: graphs.len(),
        }
    }

    pub fn atom_count(&self) -> usize {
        self.owner.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: Vec<f64>,
    /// Elementwise `log sigma^2`, bounded to `[-10, 10]` by `10 tanh(raw / 10)`.
    pub logvar: Vec<f64>,
}

/// GIN with `eps = 0`: each layer maps `h_v + sum_u (h_u + bond(uv))`
/// through a two-layer MLP; the sum readout feeds linear `mu` and `logvar` heads.
#[derive(Debug, Clone)]
pub struct Encoder {
    bond_tables: Vec<ParamId>,
    layers: Vec<Mlp>,
    mu_head: Mlp,
    logvar_head: Mlp,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let mut bond_tables = Vec::with_capacity(cfg.layers);
        let mut layers = Vec::with_capacity(cfg.layers);
        let mut width = ATOM_FEATURES;
        for l in 0..cfg.layers {
            bond_tables.push(store.add_xavier(format!("enc.bond{l}"), BOND_TYPES, width, rng)?);
            layers.push(Mlp::new(
                store,
                &format!("enc.gin{l}"),
                &[width, cfg.hidden, cfg.hidden],
                Activation::Relu,
                rng,
            )?);
            width = cfg.hidden;
        }
        let mu_head = Mlp::new(store, "enc.mu", &[width, cfg.latent_dim], Activation::Identity, rng)?;
        let logvar_head = Mlp::new(store, "enc.logvar", &[width, cfg.latent_dim], Activation::Identity, rng)?;
        Ok(Encoder {
            bond_tables,
            layers,
            mu_head,
            logvar_head,
        })
    }

    pub fn mu_head(&self) -> &Mlp {
        &self.mu_head
    }

    pub fn logvar_head(&self) -> &Mlp {
        &self.logvar_head
    }

    /// `(mu, logvar)`, each `[molecules, D]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, batch: &MolBatch) -> Result<(Var, Var)> {
        let atoms = batch.atom_count();
        let mut h = tape.leaf(batch.features.clone());
        let bonds = tape.leaf(batch.bond_onehot.clone());
        let last = self.layers.len() - 1;
        for (l, (mlp, &table)) in self.layers.iter().zip(&self.bond_tables).enumerate() {
            let agg = if batch.src.is_empty() {
                h
            } else {
                let t = tape.param(store, table);
                let bond_emb = tape.matmul(bonds, t)?;
                let from = tape.gather_rows(h, &batch.src)?;
                let msg = tape.add(from, bond_emb)?;
                let summed = tape.scatter_add_rows(msg, &batch.dst, atoms)?;
                tape.add(h, summed)?
            };
            h = mlp.forward(tape, store, agg)?;
            if l < last {
                h = tape.relu(h);
            }
        }
        let pooled = tape.scatter_add_rows(h, &batch.owner, batch.molecules)?;
        let mu = self.mu_head.forward(tape, store, pooled)?;
        let raw = self.logvar_head.forward(tape, store, pooled)?;
        // Smooth bound: a hard clamp would freeze saturated dimensions.
        let squashed = tape.scale(raw, 1.0 / LOGVAR_BOUND);
        let squashed = tape.tanh(squashed);
        let logvar = tape.scale(squashed, LOGVAR_BOUND);
        Ok((mu, logvar))
    }
}

pub fn gin_encode(model: &InfoAlign, g: &MolecularGraph) -> Result<EncoderOutput> {
    let batch = MolBatch::new(&[g]);
    let mut tape = Tape::new();
    let (mu, logvar) = model.encoder.forward(&mut tape, &model.store, &batch)?;
    Ok(EncoderOutput {
        mu: tape.value(mu).data().to_vec(),
        logvar: tape.value(logvar).data().to_vec(),
    })
}
