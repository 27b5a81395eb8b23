//! Per-loan profit and ranked-rejection profit curves.
//!
//! Currency arithmetic is generic over [`Field`] so the ledger identities can
//! be checked in exact rational arithmetic; scores stay floating point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::eval::ScoredSet;
use crate::num::{Field, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EconError {
    #[error("no loan amount/interest rate for ids {0:?}")]
    MissingEconomics(Vec<String>),
    #[error("curves are built on different portfolios")]
    PortfolioMismatch,
    #[error("lgd must lie in [0, 1]")]
    InvalidLgd,
    #[error("profit curve is empty")]
    EmptyCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconConfig<T = f64> {
    pub lgd: T,
}

impl Default for EconConfig<f64> {
    fn default() -> Self {
        Self { lgd: 0.9 }
    }
}

impl<T: Field> EconConfig<T> {
    pub fn new(lgd: T) -> Result<Self, EconError> {
        if lgd < T::zero() || lgd > T::one() {
            return Err(EconError::InvalidLgd);
        }
        Ok(Self { lgd })
    }
}

/// Profit on one loan: principal plus interest returned in full when repaid,
/// scaled by `1 - lgd` on default, less the principal lent.
pub fn loan_profit<T: Field>(defaulted: bool, amount: T, rate: T, cfg: &EconConfig<T>) -> T {
    let d = if defaulted { T::one() } else { T::zero() };
    let gross = amount.clone() * (T::one() + rate);
    d.clone() * gross.clone() * (T::one() - cfg.lgd.clone()) + (T::one() - d) * gross - amount
}

/// Loan amount and interest rate per record id.
pub type Economics<T> = BTreeMap<String, (T, T)>;

pub fn economics_of(dataset: &Dataset) -> Economics<f64> {
    dataset
        .records
        .iter()
        .map(|r| (r.id.clone(), (r.loan_amount, r.interest_rate)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint<T> {
    /// Number of highest-risk borrowers rejected.
    pub k: usize,
    /// Score of the k-th rejected borrower; `None` at k = 0 (accept everyone).
    pub threshold: Option<f64>,
    pub profit: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfitCurve<T> {
    pub points: Vec<CurvePoint<T>>,
    /// Sorted ids of the portfolio the curve was built on.
    #[serde(skip)]
    portfolio: Vec<String>,
}

impl<T> ProfitCurve<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rejects borrowers in descending score order (ties by id) and totals the
/// profit of everyone still accepted at each depth k = 0..=N.
pub fn profit_curve<S: Real, T: Field>(
    scores: &ScoredSet<S>,
    economics: &Economics<T>,
    cfg: &EconConfig<T>,
) -> Result<ProfitCurve<T>, EconError> {
    let missing: Vec<String> = scores.ids.iter().filter(|id| !economics.contains_key(*id)).cloned().collect();
    if !missing.is_empty() {
        return Err(EconError::MissingEconomics(missing));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .partial_cmp(&scores.scores[a])
            .unwrap()
            .then_with(|| scores.ids[a].cmp(&scores.ids[b]))
    });
    let n = order.len();
    // suffix sums: profit(k) = total over order[k..]
    let mut profits = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        let i = order[k];
        let (amount, rate) = economics[&scores.ids[i]].clone();
        profits[k] = profits[k + 1].clone() + loan_profit(scores.labels[i] == 1, amount, rate, cfg);
    }
    let points = profits
        .into_iter()
        .enumerate()
        .map(|(k, profit)| CurvePoint {
            k,
            threshold: (k > 0).then(|| scores.scores[order[k - 1]].f64()),
            profit,
        })
        .collect();
    let mut portfolio = scores.ids.clone();
    portfolio.sort();
    Ok(ProfitCurve { points, portfolio })
}

/// `a(k) - b(k)` for every rejection depth; positive favours `a`.
pub fn profit_difference<T: Field>(a: &ProfitCurve<T>, b: &ProfitCurve<T>) -> Result<Vec<T>, EconError> {
    if a.portfolio != b.portfolio || a.len() != b.len() {
        return Err(EconError::PortfolioMismatch);
    }
    Ok(a.points.iter().zip(&b.points).map(|(p, q)| p.profit.clone() - q.profit.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfitMax<T> {
    pub k: usize,
    pub threshold: Option<f64>,
    pub profit: T,
}

/// The fewest rejections reaching the curve's maximum profit.
pub fn profit_max_threshold<T: Field>(curve: &ProfitCurve<T>) -> Result<ProfitMax<T>, EconError> {
    let mut best = curve.points.first().ok_or(EconError::EmptyCurve)?;
    for p in &curve.points[1..] {
        if p.profit > best.profit {
            best = p;
        }
    }
    Ok(ProfitMax { k: best.k, threshold: best.threshold, profit: best.profit.clone() })
}

pub fn curve_csv(curve: &ProfitCurve<f64>) -> String {
    let mut out = String::from("k,threshold,profit\n");
    for p in &curve.points {
        let t = p.threshold.map_or_else(|| "inf".to_string(), |t| format!("{t:.6}"));
        let _ = writeln!(out, "{},{},{:.2}", p.k, t, p.profit);
    }
    out
}

pub fn difference_csv(diff: &[f64]) -> String {
    let mut out = String::from("k,diff\n");
    for (k, d) in diff.iter().enumerate() {
        let _ = writeln!(out, "{k},{d:.2}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_loans(bad_score: f64, good_score: f64) -> (ScoredSet<f64>, Economics<f64>) {
        let s = ScoredSet::new(vec![good_score, bad_score], vec![0, 1], vec!["good".into(), "bad".into()]).unwrap();
        let econ = [("good".to_string(), (100.0, 0.10)), ("bad".to_string(), (100.0, 0.10))].into_iter().collect();
        (s, econ)
    }

    #[test]
    fn loan_profit_examples() {
        let cfg = EconConfig::default();
        assert!((loan_profit(false, 100.0, 0.10, &cfg) - 10.0).abs() < 1e-12);
        assert!((loan_profit(true, 100.0, 0.10, &cfg) + 89.0).abs() < 1e-12);
        let zero = EconConfig::new(0.0).unwrap();
        assert_eq!(loan_profit(true, 250.0, 0.07, &zero), loan_profit(false, 250.0, 0.07, &zero));
        assert_eq!(EconConfig::new(1.5), Err(EconError::InvalidLgd));
    }

    #[test]
    fn two_loan_curve() {
        let (s, econ) = two_loans(0.9, 0.1);
        let curve = profit_curve(&s, &econ, &EconConfig::default()).unwrap();
        let profits: Vec<f64> = curve.points.iter().map(|p| p.profit).collect();
        let expected = [-79.0, 10.0, 0.0];
        for (p, e) in profits.iter().zip(expected) {
            assert!((p - e).abs() < 1e-9);
        }
        assert_eq!(curve.points[0].threshold, None);
        assert_eq!(curve.points[1].threshold, Some(0.9));
        let best = profit_max_threshold(&curve).unwrap();
        assert_eq!(best.k, 1);
        assert!((best.profit - 10.0).abs() < 1e-9);

        let (r, _) = two_loans(0.1, 0.9);
        let reversed = profit_curve(&r, &econ, &EconConfig::default()).unwrap();
        let diff = profit_difference(&curve, &reversed).unwrap();
        assert!((diff[1] - 99.0).abs() < 1e-9);
        assert_eq!(diff[2], 0.0);
        assert!(profit_difference(&curve, &curve).unwrap().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn missing_economics_and_mismatch() {
        let (s, mut econ) = two_loans(0.9, 0.1);
        econ.remove("bad");
        assert_eq!(
            profit_curve(&s, &econ, &EconConfig::default()),
            Err(EconError::MissingEconomics(vec!["bad".into()]))
        );
        let (s, econ) = two_loans(0.9, 0.1);
        let a = profit_curve(&s, &econ, &EconConfig::default()).unwrap();
        let other = ScoredSet::new(vec![0.5, 0.4], vec![0, 1], vec!["good".into(), "x".into()]).unwrap();
        let mut econ2 = econ.clone();
        econ2.insert("x".into(), (1.0, 0.0));
        let b = profit_curve(&other, &econ2, &EconConfig::default()).unwrap();
        assert_eq!(profit_difference(&a, &b), Err(EconError::PortfolioMismatch));
    }

    #[test]
    fn plateau_takes_fewest_rejections() {
        let s = ScoredSet::new(vec![0.9, 0.5], vec![0, 0], vec!["a".into(), "b".into()]).unwrap();
        let econ = [("a".to_string(), (100.0, 0.0)), ("b".to_string(), (50.0, 0.2))].into_iter().collect();
        let curve = profit_curve(&s, &econ, &EconConfig::default()).unwrap();
        // profits: 10, 10, 0
        assert_eq!(profit_max_threshold(&curve).unwrap().k, 0);
    }

    #[test]
    fn csv_rendering() {
        let (s, econ) = two_loans(0.9, 0.1);
        let curve = profit_curve(&s, &econ, &EconConfig::default()).unwrap();
        assert_eq!(curve_csv(&curve), "k,threshold,profit\n0,inf,-79.00\n1,0.900000,10.00\n2,0.100000,0.00\n");
        assert_eq!(difference_csv(&[1.0, -2.5]), "k,diff\n0,1.00\n1,-2.50\n");
    }
}
