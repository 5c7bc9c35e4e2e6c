//! Morgan/ECFP-style circular fingerprints and cosine similarity.
//!
//! Atom invariants are `(element, formal charge, aromatic flag, degree)`.
//! Each refinement round hashes `(round, own identifier, sorted (bond order,
//! neighbor identifier) pairs)` with 64-bit FNV-1a. Every identifier produced
//! at rounds `0..=radius` sets bit `id % nbits`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::hashing::Fnv1a;
use crate::molparse::MolecularGraph;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_NBITS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint length {0} must be a power of two >= 64")]
    BadLength(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CosineError {
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitFingerprint {
    words: Vec<u64>,
    nbits: usize,
    radius: usize,
}

impl BitFingerprint {
    fn empty(nbits: usize, radius: usize) -> Self {
        BitFingerprint {
            words: vec![0; nbits / 64],
            nbits,
            radius,
        }
    }

    fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1u64 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        (self.words[bit / 64] >> (bit % 64)) & 1 == 1
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// OR-folds the print down to `nbits` (which must divide the current length).
    pub fn fold(&self, nbits: usize) -> Result<BitFingerprint, FingerprintError> {
        check_length(nbits)?;
        if nbits > self.nbits {
            return Err(FingerprintError::BadLength(nbits));
        }
        let mut out = BitFingerprint::empty(nbits, self.radius);
        for bit in (0..self.nbits).filter(|&b| self.get(b)) {
            out.set(bit % nbits);
        }
        Ok(out)
    }

    /// Bits as 0.0/1.0 features.
    pub fn to_features(&self) -> Vec<f32> {
        (0..self.nbits)
            .map(|b| if self.get(b) { 1.0 } else { 0.0 })
            .collect()
    }

    /// Little-endian byte order, lowest bit of each byte first.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.nbits / 4);
        for w in &self.words {
            for byte in w.to_le_bytes() {
                let _ = write!(s, "{byte:02x}");
            }
        }
        s
    }
}

fn check_length(nbits: usize) -> Result<(), FingerprintError> {
    if nbits < 64 || !nbits.is_power_of_two() {
        return Err(FingerprintError::BadLength(nbits));
    }
    Ok(())
}

/// Per-round atom identifiers: `ids[r][atom]` for `r in 0..=radius`.
pub fn atom_identifiers(g: &MolecularGraph, radius: usize) -> Vec<Vec<u64>> {
    let n = g.atom_count();
    let mut rounds = Vec::with_capacity(radius + 1);
    let initial: Vec<u64> = (0..n)
        .map(|i| {
            let a = &g.atoms()[i];
            let mut h = Fnv1a::new();
            h.write_u8(a.element.ordinal() as u8);
            h.write_i8(a.formal_charge);
            h.write_u8(u8::from(a.aromatic));
            h.write_u32(g.degree(i) as u32);
            h.finish()
        })
        .collect();
    rounds.push(initial);
    for r in 1..=radius {
        let prev = &rounds[r - 1];
        let next: Vec<u64> = (0..n)
            .map(|v| {
                let mut env: Vec<(u8, u64)> = g
                    .neighbors(v)
                    .iter()
                    .map(|&(u, o)| (o.ordinal() as u8, prev[u]))
                    .collect();
                env.sort_unstable();
                let mut h = Fnv1a::new();
                h.write_u32(r as u32);
                h.write_u64(prev[v]);
                for (o, id) in env {
                    h.write_u8(o);
                    h.write_u64(id);
                }
                h.finish()
            })
            .collect();
        rounds.push(next);
    }
    rounds
}

/// All pre-fold identifiers generated up to and including `radius`.
pub fn identifier_set(g: &MolecularGraph, radius: usize) -> BTreeSet<u64> {
    atom_identifiers(g, radius).into_iter().flatten().collect()
}

pub fn morgan_fingerprint(
    g: &MolecularGraph,
    radius: usize,
    nbits: usize,
) -> Result<BitFingerprint, FingerprintError> {
    check_length(nbits)?;
    let mut fp = BitFingerprint::empty(nbits, radius);
    for ids in atom_identifiers(g, radius) {
        for id in ids {
            fp.set((id % nbits as u64) as usize);
        }
    }
    Ok(fp)
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, CosineError> {
    if u.len() != v.len() {
        return Err(CosineError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(CosineError::ZeroVector);
    }
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine over `f32` features, accumulated in `f64`.
pub fn cosine_f32(u: &[f32], v: &[f32]) -> Result<f64, CosineError> {
    if u.len() != v.len() {
        return Err(CosineError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(CosineError::ZeroVector);
    }
    Ok((dot / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}
