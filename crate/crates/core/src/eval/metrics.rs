use serde::{Deserialize, Serialize};

use super::{EvalError, ScoredSet};
use crate::num::Real;

/// Area under the ROC curve from mid-ranks; equals the concordant-pair
/// fraction with ties counted as one half.
pub fn auc<T: Real>(s: &ScoredSet<T>) -> Result<T, EvalError> {
    let (n_pos, n_neg) = s.require_both()?;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.scores[a].partial_cmp(&s.scores[b]).unwrap());
    // accumulate twice the positive rank sum in integers to stay exact
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s.scores[idx[j + 1]] == s.scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2
        let pos_in_group = idx[i..=j].iter().filter(|&&k| s.labels[k] == 1).count() as u128;
        rank_sum2 += pos_in_group * (i as u128 + j as u128 + 2);
        i = j + 1;
    }
    let np = n_pos as u128;
    let u2 = rank_sum2 - np * (np + 1);
    Ok(T::from_u128(u2).unwrap() / T::from_u128(2 * np * n_neg as u128).unwrap())
}

/// Largest gap between true- and false-positive rates over all thresholds.
pub fn ks<T: Real>(s: &ScoredSet<T>) -> Result<T, EvalError> {
    let (n_pos, n_neg) = s.require_both()?;
    let (p, n) = (T::from_usize(n_pos).unwrap(), T::from_usize(n_neg).unwrap());
    Ok(s.threshold_counts()
        .into_iter()
        .map(|(_, tp, fp)| (T::from_usize(tp).unwrap() / p - T::from_usize(fp).unwrap() / n).abs())
        .fold(T::zero(), T::max))
}

/// ROC points `(FPR, TPR)` from `(0, 0)` through each distinct threshold
/// (descending) to `(1, 1)`.
pub fn roc_points<T: Real>(s: &ScoredSet<T>) -> Result<Vec<(T, T)>, EvalError> {
    let (n_pos, n_neg) = s.require_both()?;
    let (p, n) = (T::from_usize(n_pos).unwrap(), T::from_usize(n_neg).unwrap());
    let mut pts = vec![(T::zero(), T::zero())];
    pts.extend(
        s.threshold_counts()
            .into_iter()
            .map(|(_, tp, fp)| (T::from_usize(fp).unwrap() / n, T::from_usize(tp).unwrap() / p)),
    );
    Ok(pts)
}

/// `(recall, precision)` at each distinct threshold, descending.
pub fn pr_points<T: Real>(s: &ScoredSet<T>) -> Result<Vec<(T, T)>, EvalError> {
    let (n_pos, _) = s.require_both()?;
    Ok(pr_curve(s, n_pos))
}

fn pr_curve<T: Real>(s: &ScoredSet<T>, n_pos: usize) -> Vec<(T, T)> {
    let p = T::from_usize(n_pos).unwrap();
    s.threshold_counts()
        .into_iter()
        .map(|(_, tp, fp)| {
            let tpf = T::from_usize(tp).unwrap();
            (tpf / p, tpf / T::from_usize(tp + fp).unwrap())
        })
        .collect()
}

/// Average precision: `Σ (R_i − R_{i−1}) · P_i` over distinct thresholds.
pub fn pr_auc<T: Real>(s: &ScoredSet<T>) -> Result<T, EvalError> {
    let n_pos = s.n_pos();
    if n_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut prev = T::zero();
    let mut area = T::zero();
    for (r, p) in pr_curve(s, n_pos) {
        area = area + (r - prev) * p;
        prev = r;
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK<T = f64> {
    pub k: usize,
    pub recall: T,
    pub precision: T,
    pub f1: T,
}

/// Treats the `k` highest scores as predicted defaulters (equal scores
/// ordered by ascending record id).
pub fn topk_metrics<T: Real>(s: &ScoredSet<T>, k: usize) -> Result<TopK<T>, EvalError> {
    let n = s.len();
    if k == 0 || k > n {
        return Err(EvalError::BadK { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| s.scores[b].partial_cmp(&s.scores[a]).unwrap().then_with(|| s.ids[a].cmp(&s.ids[b])));
    let tp = idx[..k].iter().filter(|&&i| s.labels[i] == 1).count();
    let n_pos = s.n_pos();
    let tpf = T::from_usize(tp).unwrap();
    let precision = tpf / T::from_usize(k).unwrap();
    let recall = if n_pos == 0 { T::zero() } else { tpf / T::from_usize(n_pos).unwrap() };
    let f1 = if precision + recall == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * precision * recall / (precision + recall)
    };
    Ok(TopK { k, recall, precision, f1 })
}
