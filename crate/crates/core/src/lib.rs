//! Information-bottleneck molecular representation learning over a weighted
//! heterogeneous context graph.
//!
//! The pipeline: parse SMILES ([`molparse`]), fingerprint molecules
//! ([`fingerprint`]), assemble the context graph ([`ctxgraph`]), sample
//! weighted walks ([`walker`]), pretrain a GIN encoder with per-modality
//! decoders ([`model`], built on [`diffcore`]), and evaluate the learned
//! embeddings ([`evalkit`]). [`mibounds`] checks the mutual-information
//! bound ordering that motivates decoder-based alignment.

pub mod config;
pub mod ctxgraph;
pub mod diffcore;
pub mod evalkit;
pub mod fingerprint;
pub mod hashing;
pub mod mibounds;
pub mod model;
pub mod molparse;
pub mod rng;
pub mod synth;
pub mod walker;
