use super::{EvalError, Result};

/// Area under the ROC curve via midranks; ties count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps every midrank an integer.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        rank_sum2 += mid2 * order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j + 1;
    }
    let pos = pos as u64;
    let u2 = rank_sum2 - pos * (pos + 1);
    Ok(u2 as f64 / 2.0 / (pos as f64 * neg as f64))
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::TooFew { need: 1, got: 0 });
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Single-relevant-item NDCG@k for a 1-based rank.
pub fn ndcg_at(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((1 + rank) as f64).log2()
    } else {
        0.0
    }
}

pub fn hit_at(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Fraction of values strictly above each threshold.
pub fn threshold_fractions(values: &[f64], thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| {
            if values.is_empty() {
                0.0
            } else {
                values.iter().filter(|&&v| v > t).count() as f64 / values.len() as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn mae_cases() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, 3.5], &[1.0, 2.5]).unwrap(), 1.0);
        assert!(matches!(mae(&[1.0], &[]), Err(EvalError::LengthMismatch(1, 0))));
    }

    #[test]
    fn ranking_metrics() {
        assert_eq!((ndcg_at(1, 1), hit_at(1, 1)), (1.0, 1.0));
        assert_eq!((ndcg_at(3, 10), hit_at(3, 10)), (0.5, 1.0));
        assert_eq!((ndcg_at(11, 10), hit_at(11, 10)), (0.0, 0.0));
    }

    #[test]
    fn threshold_counting() {
        assert_eq!(threshold_fractions(&[0.82, 0.91], &[0.80, 0.90]), vec![1.0, 0.5]);
    }
}
