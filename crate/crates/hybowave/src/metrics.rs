//! Ranking metrics for binary link prediction: area under the ROC curve
//! (Mann-Whitney formulation) and area under the precision-recall curve
//! (average precision over descending score thresholds).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation results plus the training trace they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub aupr: f64,
    pub best_epoch: usize,
    pub losses: Vec<f64>,
}

/// AUC via the rank-sum identity: `(#(pos > neg) + 0.5 #(pos = neg)) / (P*N)`.
/// Ties receive averaged ranks, which reproduces the pair count exactly.
pub fn compute_auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::Contract(
            "compute_auc needs nonempty positive and negative score lists".into(),
        ));
    }
    let p = pos_scores.len();
    let n = neg_scores.len();
    let mut scored: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        // average 1-based rank of the tie group [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &scored[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    Ok((rank_sum_pos - (p * (p + 1)) as f64 / 2.0) / (p as f64 * n as f64))
}

/// Average precision: `sum_k (R_k - R_{k-1}) P_k` over descending unique score
/// thresholds, with tied scores grouped at a single threshold.
pub fn compute_aupr(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::Contract(
            "compute_aupr needs nonempty positive and negative score lists".into(),
        ));
    }
    let p = pos_scores.len() as f64;
    let mut scored: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Direct pair enumeration, the oracle the fast path must match exactly.
    fn brute_force_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for &a in pos {
            for &b in neg {
                if a > b {
                    wins += 1.0;
                } else if a == b {
                    wins += 0.5;
                }
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auc_perfect_separation() {
        assert_eq!(compute_auc(&[0.9, 0.8], &[0.1]).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties() {
        assert_eq!(compute_auc(&[0.5], &[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn auc_one_win_one_loss() {
        assert_eq!(compute_auc(&[0.9, 0.2], &[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn auc_rejects_empty_lists() {
        assert!(compute_auc(&[], &[0.5]).is_err());
        assert!(compute_auc(&[0.5], &[]).is_err());
    }

    #[test]
    fn auc_matches_brute_force_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let np = rng.random_range(1..50usize);
            let nn = rng.random_range(1..50usize);
            // quantized scores to exercise ties
            let pos: Vec<f64> = (0..np).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
            let neg: Vec<f64> = (0..nn).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
            let fast = compute_auc(&pos, &neg).unwrap();
            let slow = brute_force_auc(&pos, &neg);
            assert_eq!(fast, slow, "pos {pos:?} neg {neg:?}");
            assert!((0.0..=1.0).contains(&fast));
        }
    }

    #[test]
    fn aupr_perfect_separation() {
        assert_eq!(compute_aupr(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
    }

    #[test]
    fn aupr_single_positive_found_second() {
        assert_eq!(compute_aupr(&[0.4], &[0.6]).unwrap(), 0.5);
    }

    #[test]
    fn aupr_random_scores_near_half_on_balanced_lists() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let n = 5000;
        let pos: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let neg: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let aupr = compute_aupr(&pos, &neg).unwrap();
        assert!((aupr - 0.5).abs() <= 0.05, "aupr {aupr}");
    }

    /// Threshold-by-threshold recomputation from scratch.
    fn brute_force_aupr(pos: &[f64], neg: &[f64]) -> f64 {
        let mut thresholds: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let tp = pos.iter().filter(|&&s| s >= t).count();
            let fp = neg.iter().filter(|&&s| s >= t).count();
            let recall = tp as f64 / pos.len() as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area
    }

    #[test]
    fn aupr_matches_brute_force_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let np = rng.random_range(1..50usize);
            let nn = rng.random_range(1..50usize);
            let pos: Vec<f64> = (0..np).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
            let neg: Vec<f64> = (0..nn).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
            let fast = compute_aupr(&pos, &neg).unwrap();
            let slow = brute_force_aupr(&pos, &neg);
            assert_eq!(fast, slow);
            assert!((0.0..=1.0).contains(&fast));
        }
    }
}
