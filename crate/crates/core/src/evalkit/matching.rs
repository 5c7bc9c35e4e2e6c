use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{hit_at, ndcg_at, EvalError, Result};
use crate::ctxgraph::NodeKind;
use crate::model::{decode_outputs, gin_encode, DecoderKey, InfoAlign};
use crate::molparse::MolecularGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub query: String,
    /// Candidate ids with scores, best first.
    pub ranked: Vec<(String, f64)>,
    /// 1-based rank of the true candidate.
    pub true_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub rankings: Vec<RankingResult>,
    pub ndcg: BTreeMap<usize, f64>,
    pub hit: BTreeMap<usize, f64>,
}

/// Candidate order by descending score, ties broken by ascending id.
pub fn rank_candidates(scores: &[f64], ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    order
}

/// Mean NDCG@k and HIT@k over 1-based true ranks.
pub fn ranking_metrics(true_ranks: &[usize], ks: &[usize]) -> (BTreeMap<usize, f64>, BTreeMap<usize, f64>) {
    let n = true_ranks.len().max(1) as f64;
    let mut ndcg = BTreeMap::new();
    let mut hit = BTreeMap::new();
    for &k in ks {
        ndcg.insert(k, true_ranks.iter().map(|&r| ndcg_at(r, k)).sum::<f64>() / n);
        hit.insert(k, true_ranks.iter().map(|&r| hit_at(r, k)).sum::<f64>() / n);
    }
    (ndcg, hit)
}

/// Ranks every candidate morphology profile for each query molecule by its
/// log-likelihood under the morphology decoder at the query's `mu`.
/// `truth[q]` is the index of query `q`'s true candidate.
pub fn match_zero_shot(
    model: &InfoAlign,
    queries: &[(String, &MolecularGraph)],
    candidates: &[(String, Vec<f32>)],
    truth: &[usize],
    ks: &[usize],
) -> Result<MatchReport> {
    if truth.len() != queries.len() {
        return Err(EvalError::LengthMismatch(queries.len(), truth.len()));
    }
    let Some(first) = candidates.first() else {
        return Err(EvalError::TooFew { need: 1, got: 0 });
    };
    let dim = first.1.len();
    if let Some(c) = candidates.iter().find(|c| c.1.len() != dim) {
        return Err(EvalError::DimensionMismatch {
            expected: dim,
            found: c.1.len(),
        });
    }
    if let Some(&t) = truth.iter().find(|&&t| t >= candidates.len()) {
        return Err(EvalError::Invalid(format!("true candidate index {t} out of range")));
    }
    let key = DecoderKey::new(NodeKind::CellMorphology, dim);
    if !model.decoders.contains(key) {
        let expected = model
            .decoders
            .keys()
            .find(|k| k.kind == NodeKind::CellMorphology)
            .map(|k| k.dim);
        return Err(match expected {
            Some(expected) => EvalError::DimensionMismatch { expected, found: dim },
            None => EvalError::Model(crate::model::ModelError::NoDecoder {
                kind: key.kind,
                dim,
            }),
        });
    }
    let lik = model.config.likelihood;
    let ids: Vec<String> = candidates.iter().map(|c| c.0.clone()).collect();
    let mut rankings = Vec::with_capacity(queries.len());
    for ((qid, g), &t) in queries.iter().zip(truth) {
        let mu = gin_encode(model, g)?.mu;
        let out = decode_outputs(model, &mu, key)?;
        let scores: Vec<f64> = candidates
            .iter()
            .map(|(_, y)| -out.iter().zip(y).map(|(&o, &v)| lik.nll(o, f64::from(v))).sum::<f64>())
            .collect();
        let order = rank_candidates(&scores, &ids);
        let true_rank = order.iter().position(|&i| i == t).expect("truth in range") + 1;
        rankings.push(RankingResult {
            query: qid.clone(),
            ranked: order.iter().map(|&i| (ids[i].clone(), scores[i])).collect(),
            true_rank,
        });
    }
    let ranks: Vec<usize> = rankings.iter().map(|r| r.true_rank).collect();
    let (ndcg, hit) = ranking_metrics(&ranks, ks);
    Ok(MatchReport { rankings, ndcg, hit })
}
