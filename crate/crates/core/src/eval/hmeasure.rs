//! Hand's H-measure.
//!
//! With cost weight `c` on misclassified non-defaulters and `1 − c` on
//! misclassified defaulters, the loss of the ROC operating point
//! `(fpr, tpr)` is `c·π₀·fpr + (1 − c)·π₁·(1 − tpr)`. Averaging the best
//! achievable loss over `c ~ Beta(a, b)` gives `L`; the same average for a
//! classifier that assigns everyone to one class gives `L_ref`, and
//! `H = 1 − L / L_ref`.
//!
//! The minimum over operating points is attained on the ROC convex hull,
//! and each hull vertex is optimal on an interval of `c`, so `L` reduces to
//! sums of regularized incomplete beta functions.

use statrs::function::beta::beta_reg;

use super::{roc_points, EvalError, ScoredSet};
use crate::num::Real;

/// Distribution of the cost weight `c`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CostPrior {
    /// `Beta(π₁ + 1, π₀ + 1)`, tying the severity ratio to class frequency.
    #[default]
    ClassFrequency,
    /// The original symmetric `Beta(2, 2)`.
    Symmetric,
    /// `Beta(2, 1 + r)`, whose mode sits at `1 / (1 + r)`.
    SeverityRatio(f64),
}

impl CostPrior {
    /// Beta shape parameters for the given class priors.
    pub fn shape(self, pi0: f64, pi1: f64) -> (f64, f64) {
        match self {
            CostPrior::ClassFrequency => (pi1 + 1.0, pi0 + 1.0),
            CostPrior::Symmetric => (2.0, 2.0),
            CostPrior::SeverityRatio(r) => (2.0, 1.0 + r),
        }
    }
}

/// Upper convex hull of ROC points sorted by FPR, from (0,0) to (1,1).
pub(crate) fn roc_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            // drop b unless it bends the chain clockwise (strictly above a→p)
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// `∫_lo^hi c·w(c) dc` and `∫_lo^hi (1 − c)·w(c) dc` for `w = Beta(a, b)`.
fn partial_moments(a: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    if hi <= lo {
        return (0.0, 0.0);
    }
    let inc = |p: f64, q: f64, x: f64| {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(p, q, x)
        }
    };
    let m1 = a / (a + b) * (inc(a + 1.0, b, hi) - inc(a + 1.0, b, lo));
    let m0 = b / (a + b) * (inc(a, b + 1.0, hi) - inc(a, b + 1.0, lo));
    (m1, m0)
}

pub fn h_measure<T: Real>(s: &ScoredSet<T>, prior: CostPrior) -> Result<T, EvalError> {
    let (n_pos, n_neg) = s.require_both()?;
    let n = (n_pos + n_neg) as f64;
    let (pi0, pi1) = (n_neg as f64 / n, n_pos as f64 / n);
    let (a, b) = prior.shape(pi0, pi1);

    let pts: Vec<(f64, f64)> = roc_points(s)?.into_iter().map(|(x, y)| (x.f64(), y.f64())).collect();
    let hull = roc_hull(&pts);

    // vertex j is optimal for c in [c_j, c_{j-1}], c_{-1} = 1, c_last = 0
    let mut upper = 1.0;
    let mut loss = 0.0;
    for j in 0..hull.len() {
        let lower = if j + 1 < hull.len() {
            let (dx, dy) = (hull[j + 1].0 - hull[j].0, hull[j + 1].1 - hull[j].1);
            let denom = pi0 * dx + pi1 * dy;
            if denom > 0.0 {
                pi1 * dy / denom
            } else {
                upper
            }
        } else {
            0.0
        };
        let lower = lower.min(upper);
        let (m1, m0) = partial_moments(a, b, lower, upper);
        loss += pi0 * hull[j].0 * m1 + pi1 * (1.0 - hull[j].1) * m0;
        upper = lower;
    }

    let (ref1, _) = partial_moments(a, b, 0.0, pi1);
    let (_, ref0) = partial_moments(a, b, pi1, 1.0);
    let reference = pi0 * ref1 + pi1 * ref0;
    Ok(T::of((1.0 - loss / reference).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet<f64> {
        ScoredSet::from_scores(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn perfect_and_uninformative() {
        let p = set(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        assert!((h_measure(&p, CostPrior::default()).unwrap() - 1.0).abs() < 1e-12);
        let u = set(&[0.5; 6], &[0, 1, 0, 0, 1, 0]);
        assert!(h_measure(&u, CostPrior::default()).unwrap().abs() < 1e-12);
        assert!(h_measure(&u, CostPrior::Symmetric).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hull_drops_concave_points() {
        let h = roc_hull(&[(0.0, 0.0), (0.5, 0.2), (0.5, 0.5), (1.0, 1.0), (0.2, 0.6)]);
        assert_eq!(h, vec![(0.0, 0.0), (0.2, 0.6), (1.0, 1.0)]);
    }

    #[test]
    fn inverted_classifier_scores_zero() {
        // below-diagonal ROC; the hull is the diagonal
        let s = set(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]);
        assert!(h_measure(&s, CostPrior::default()).unwrap().abs() < 1e-12);
    }
}
