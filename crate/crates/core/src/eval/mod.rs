//! Discrimination metrics, top-k classification tables and the
//! seed × resample bootstrap.

mod bootstrap;
mod hmeasure;
mod metrics;

pub use bootstrap::{bootstrap, bootstrap_with, percentile, MetricEstimate, MAX_REDRAWS};
pub use hmeasure::{h_measure, CostPrior};
pub use metrics::{auc, ks, pr_auc, pr_points, roc_points, topk_metrics, TopK};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("both classes are required")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("k must satisfy 0 < k <= n (k = {k}, n = {n})")]
    BadK { k: usize, n: usize },
    #[error("scored set is malformed: {0}")]
    Malformed(String),
    #[error("runs do not cover the same record ids")]
    RunMismatch,
    #[error("no valid bootstrap resample")]
    AllDegenerate,
}

/// Scores, binary labels (1 = default) and record ids, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet<T: Real = f64> {
    pub scores: Vec<T>,
    pub labels: Vec<u8>,
    pub ids: Vec<String>,
}

impl<T: Real> ScoredSet<T> {
    pub fn new(scores: Vec<T>, labels: Vec<u8>, ids: Vec<String>) -> Result<Self, EvalError> {
        if scores.len() != labels.len() || scores.len() != ids.len() {
            return Err(EvalError::Malformed("length mismatch".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(EvalError::Malformed("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(EvalError::Malformed("NaN score".into()));
        }
        Ok(Self { scores, labels, ids })
    }

    /// Ids are generated as zero-padded positions.
    pub fn from_scores(scores: Vec<T>, labels: Vec<u8>) -> Result<Self, EvalError> {
        let ids = (0..scores.len()).map(|i| format!("{i:06}")).collect();
        Self::new(scores, labels, ids)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.len() - self.n_pos()
    }

    pub(crate) fn require_both(&self) -> Result<(usize, usize), EvalError> {
        let (p, n) = (self.n_pos(), self.n_neg());
        if p == 0 || n == 0 {
            Err(EvalError::SingleClass)
        } else {
            Ok((p, n))
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Indices sorted by descending score (ties keep their relative order).
    pub(crate) fn descending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].partial_cmp(&self.scores[a]).unwrap());
        idx
    }

    /// Cumulative (positives, negatives) at each distinct score, highest
    /// score first.
    pub(crate) fn threshold_counts(&self) -> Vec<(T, usize, usize)> {
        let order = self.descending();
        let mut out: Vec<(T, usize, usize)> = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (k, &i) in order.iter().enumerate() {
            if self.labels[i] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_group = order.get(k + 1).is_none_or(|&j| self.scores[j] != self.scores[i]);
            if last_of_group {
                out.push((self.scores[i], tp, fp));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    Ks,
    #[serde(rename = "h")]
    HMeasure,
    #[serde(rename = "prauc")]
    PrAuc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Auc, Metric::Ks, Metric::HMeasure, Metric::PrAuc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Ks => "ks",
            Metric::HMeasure => "h",
            Metric::PrAuc => "prauc",
        }
    }

    pub fn compute<T: Real>(self, s: &ScoredSet<T>) -> Result<T, EvalError> {
        match self {
            Metric::Auc => auc(s),
            Metric::Ks => ks(s),
            Metric::HMeasure => h_measure(s, CostPrior::default()),
            Metric::PrAuc => pr_auc(s),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown metric {s:?}"))
    }
}
