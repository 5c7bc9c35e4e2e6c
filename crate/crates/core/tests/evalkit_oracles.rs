mod common;

use infoalign_core::evalkit::tsv::{join_labeled, read_labels, read_matrix, write_matrix};
use infoalign_core::evalkit::{
    auc, hit_at, mae, ndcg_at, probe_eval, probe_train, rank_candidates, ranking_metrics, split_random,
    threshold_fractions, EvalError, LabeledSet, ProbeConfig, ProbeHead, TaskKind, DEFAULT_RATIOS,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn auc_equals_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..200 {
        let n = rng.random_range(2..=1000);
        // Coarse scores force many ties on some trials.
        let levels = [3, 20, 1_000_000][trial % 3];
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 7.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[n - 1] = false;
        let (twice, pairs) = common::auc_pairs(&scores, &labels);
        assert_eq!(auc(&scores, &labels).unwrap(), twice as f64 / 2.0 / pairs as f64, "trial {trial}");
    }
    assert_eq!(auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
    assert_eq!(auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    assert!(matches!(auc(&[1.0, 2.0], &[true, true]), Err(EvalError::SingleClass)));
    assert!(auc(&[1.0], &[true, false]).is_err());
}

/// DCG of the full re-ranked list with a single relevant item; the ideal DCG is 1.
fn brute_ndcg(order: &[usize], truth: usize, k: usize) -> f64 {
    order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &c)| if c == truth { 1.0 / ((i + 2) as f64).log2() } else { 0.0 })
        .sum()
}

#[test]
fn ranking_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ks = [1, 5, 10];
    for _ in 0..100 {
        let (q, c) = (rng.random_range(1..30), rng.random_range(1..40));
        let ids: Vec<String> = {
            let mut v: Vec<String> = (0..c).map(|j| format!("cand{j:02}")).collect();
            v.shuffle(&mut rng);
            v
        };
        let mut ranks = Vec::new();
        let mut expect_ndcg = vec![0.0; ks.len()];
        let mut expect_hit = vec![0.0; ks.len()];
        for _ in 0..q {
            let scores: Vec<f64> = (0..c).map(|_| rng.random_range(0..6) as f64).collect();
            let truth = rng.random_range(0..c);
            let order = rank_candidates(&scores, &ids);
            let rank = order.iter().position(|&i| i == truth).unwrap() + 1;
            assert_eq!(rank, common::brute_rank(&scores, &ids, truth));
            for (slot, &k) in ks.iter().enumerate() {
                expect_ndcg[slot] += brute_ndcg(&order, truth, k) / q as f64;
                expect_hit[slot] += f64::from(u8::from(order[..k.min(c)].contains(&truth))) / q as f64;
            }
            ranks.push(rank);
        }
        let (ndcg, hit) = ranking_metrics(&ranks, &ks);
        for (slot, k) in ks.iter().enumerate() {
            assert!((ndcg[k] - expect_ndcg[slot]).abs() < 1e-12);
            assert!((hit[k] - expect_hit[slot]).abs() < 1e-12);
        }
    }
    assert_eq!(ndcg_at(1, 1), 1.0);
    assert_eq!(ndcg_at(3, 10), 0.5);
    assert_eq!(ndcg_at(11, 10), 0.0);
    assert_eq!(hit_at(10, 10), 1.0);
    assert_eq!(hit_at(0, 10), 0.0);
}

#[test]
fn mae_and_thresholds() {
    assert_eq!(mae(&[1.0, 2.0, 4.0], &[1.5, 2.0, 1.0]).unwrap(), 3.5 / 3.0);
    assert!(mae(&[], &[]).is_err());
    assert!(mae(&[1.0], &[]).is_err());
    assert_eq!(threshold_fractions(&[0.7, 0.81, 0.86, 0.95], &[0.8, 0.85, 0.9]), vec![0.75, 0.5, 0.25]);
    assert_eq!(threshold_fractions(&[], &[0.8]), vec![0.0]);
}

fn gaussian_rows<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

fn probe_auc(set: &LabeledSet, seed: u64) -> f64 {
    let sp = split_random(set.len(), DEFAULT_RATIOS, seed).unwrap();
    let head = probe_train(&set.subset(&sp.train), &ProbeConfig::default()).unwrap();
    probe_eval(&head, &set.subset(&sp.test)).unwrap().auc_avg.unwrap()
}

#[test]
fn probe_separates_and_does_not_hallucinate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 500;
    let mut emb = gaussian_rows(n, 8, &mut rng);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    for (e, &l) in emb.iter_mut().zip(&labels) {
        e[0] += if l { 3.0 } else { -3.0 };
    }
    assert!(probe_auc(&LabeledSet::binary(emb.clone(), &labels), 0) >= 0.99);

    let mut shuffled = labels.clone();
    shuffled.shuffle(&mut rng);
    let noise = gaussian_rows(n, 8, &mut rng);
    let a = probe_auc(&LabeledSet::binary(noise, &shuffled), 1);
    assert!((0.4..=0.6).contains(&a), "{a}");
}

#[test]
fn probe_handles_regression_and_hidden_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let emb = gaussian_rows(300, 4, &mut rng);
    let mut set = LabeledSet::binary(emb.clone(), &vec![false; 300]);
    set.tasks = vec![("y".into(), TaskKind::Regression)];
    set.labels = emb.iter().map(|e| vec![50.0 + 10.0 * e[1] - 5.0 * e[2]]).collect();
    let sp = split_random(300, DEFAULT_RATIOS, 0).unwrap();
    let cfg = ProbeConfig {
        hidden: Some(16),
        ..ProbeConfig::default()
    };
    let head = probe_train(&set.subset(&sp.train), &cfg).unwrap();
    let rep = probe_eval(&head, &set.subset(&sp.test)).unwrap();
    assert!(rep.mae_avg.unwrap() < 2.0, "{:?}", rep.mae_avg);
    assert!(rep.auc_avg.is_none());

    let json = serde_json::to_string(&head).unwrap();
    let back: ProbeHead = serde_json::from_str(&json).unwrap();
    assert_eq!(back, head);
    assert_eq!(back.predict(&emb).unwrap(), head.predict(&emb).unwrap());
}

#[test]
fn single_class_test_split_is_skipped() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let emb = gaussian_rows(40, 3, &mut rng);
    let labels: Vec<bool> = (0..40).map(|i| i < 20).collect();
    let set = LabeledSet::binary(emb, &labels);
    let head = probe_train(&set, &ProbeConfig::default()).unwrap();
    let rep = probe_eval(&head, &set.subset(&(0..20).collect::<Vec<_>>())).unwrap();
    assert!(rep.tasks[0].value.is_none());
    assert!(rep.tasks[0].skipped.is_some());
}

proptest! {
    #[test]
    fn split_is_a_seeded_partition(n in 3usize..400, seed in any::<u64>()) {
        let a = split_random(n, DEFAULT_RATIOS, seed).unwrap();
        prop_assert_eq!(&a, &split_random(n, DEFAULT_RATIOS, seed).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.valid).chain(&a.test).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(!a.train.is_empty() && !a.valid.is_empty() && !a.test.is_empty());
    }

    #[test]
    fn auc_is_rank_invariant(seed in any::<u64>(), n in 2usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&warped, &labels).unwrap());
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((auc(&scores, &labels).unwrap() + auc(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tables_round_trip() {
    let rows = vec![("a".to_string(), vec![0.1, -2.5]), ("b".to_string(), vec![1e-300, 7.0])];
    let text = write_matrix(&rows, "z");
    assert!(text.starts_with("id\tz0\tz1\n"));
    assert_eq!(read_matrix(&text).unwrap(), rows);
    assert!(read_matrix("a\t1\nb\t1\t2\n").is_err());
    assert!(read_matrix("a\tx\n").is_err());

    let labels = "id\tactive\tpotency\na\t1\t3.5\nb\t0\tNA\nc\t\t1.0\n";
    let (ids, tasks, vals, mask) = read_labels(labels).unwrap();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(tasks[0].1, TaskKind::Classification);
    assert_eq!(tasks[1].1, TaskKind::Regression);
    assert_eq!(vals[0], vec![1.0, 3.5]);
    assert_eq!(mask[1], vec![true, false]);
    assert_eq!(mask[2], vec![false, true]);

    let set = join_labeled(&[("c".into(), vec![1.0]), ("zz".into(), vec![0.0]), ("a".into(), vec![2.0])], labels).unwrap();
    assert_eq!(set.ids, ["c", "a"]);
    assert!(read_labels("id\tt\na\t1\t2\n").is_err());
}
