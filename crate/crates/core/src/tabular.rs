//! Structured-feature preparation: imputation, binning, weight-of-evidence
//! encoding, information-value and variance-inflation screening.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, FeatureKind, FeatureValue};
use crate::linalg::{r_squared, Matrix};
use crate::num::Real;

#[derive(Debug, thiserror::Error)]
pub enum TabularError {
    #[error("continuous feature {0:?} is missing in every training row")]
    AllMissingFeature(String),
    #[error("training rows contain a single class")]
    SingleClassTrain,
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {0:?} has not been fitted")]
    UnfittedFeature(String),
    #[error("feature {0:?} still has missing values; impute first")]
    UnexpectedMissing(String),
    #[error("vif needs at least as many rows as columns ({rows} rows, {cols} columns)")]
    TooFewRows { rows: usize, cols: usize },
    #[error("empty training index set")]
    EmptyTrain,
}

type Result<T> = std::result::Result<T, TabularError>;

pub const MISSING_CATEGORY: &str = "MISSING";

/// Fills continuous gaps with the training mean and categorical gaps with
/// the literal category `MISSING`, in every row.
pub fn impute(dataset: &Dataset, train: &[usize]) -> Result<Dataset> {
    if train.is_empty() {
        return Err(TabularError::EmptyTrain);
    }
    let mut means = BTreeMap::new();
    for spec in &dataset.schema.0 {
        if spec.kind != FeatureKind::Continuous {
            continue;
        }
        let observed: Vec<f64> = train
            .iter()
            .filter_map(|&i| match dataset.records[i].features.get(&spec.name) {
                Some(FeatureValue::Continuous(v)) => Some(*v),
                _ => None,
            })
            .collect();
        if observed.is_empty() {
            return Err(TabularError::AllMissingFeature(spec.name.clone()));
        }
        means.insert(spec.name.clone(), observed.iter().sum::<f64>() / observed.len() as f64);
    }
    let mut out = dataset.clone();
    for rec in &mut out.records {
        for spec in &dataset.schema.0 {
            let v = rec.features.entry(spec.name.clone()).or_insert(FeatureValue::Missing);
            if v.is_missing() {
                *v = match spec.kind {
                    FeatureKind::Continuous => FeatureValue::Continuous(means[&spec.name]),
                    FeatureKind::Categorical => FeatureValue::Categorical(MISSING_CATEGORY.to_string()),
                };
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureBins {
    /// `k` strictly increasing edges give `k + 1` half-open bins `[lo, hi)`.
    Continuous { edges: Vec<f64> },
    /// Known categories; anything else falls in the reserved bin `levels.len()`.
    Categorical { levels: BTreeMap<String, usize> },
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        match self {
            FeatureBins::Continuous { edges } => edges.len() + 1,
            FeatureBins::Categorical { levels } => levels.values().max().map_or(0, |m| m + 1),
        }
    }

    /// Bin of a value; `None` for an unseen category.
    pub fn bin_of(&self, v: &FeatureValue) -> Option<usize> {
        match (self, v) {
            (FeatureBins::Continuous { edges }, FeatureValue::Continuous(x)) => {
                Some(edges.partition_point(|e| e <= x))
            }
            (FeatureBins::Categorical { levels }, FeatureValue::Categorical(c)) => levels.get(c).copied(),
            (FeatureBins::Categorical { levels }, FeatureValue::Continuous(x)) => levels.get(&x.to_string()).copied(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub features: BTreeMap<String, FeatureBins>,
}

/// Quantile edges for continuous features (`n_bins` bins, duplicates
/// merged) and one bin per observed category.
pub fn fit_binning(dataset: &Dataset, train: &[usize], n_bins: usize) -> Result<BinningSpec> {
    let mut features = BTreeMap::new();
    for spec in &dataset.schema.0 {
        let values = train.iter().map(|&i| &dataset.records[i].features[&spec.name]);
        let bins = match spec.kind {
            FeatureKind::Continuous => {
                let mut xs = Vec::new();
                for v in values {
                    match v {
                        FeatureValue::Continuous(x) => xs.push(*x),
                        _ => return Err(TabularError::UnexpectedMissing(spec.name.clone())),
                    }
                }
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut edges: Vec<f64> = Vec::new();
                if let Some(&min) = xs.first() {
                    for q in 1..n_bins.max(1) {
                        let e = xs[(q * xs.len()) / n_bins];
                        if e > min && edges.last().is_none_or(|&l| e > l) {
                            edges.push(e);
                        }
                    }
                }
                FeatureBins::Continuous { edges }
            }
            FeatureKind::Categorical => {
                let mut cats = BTreeSet::new();
                for v in values {
                    match v {
                        FeatureValue::Categorical(c) => {
                            cats.insert(c.clone());
                        }
                        FeatureValue::Continuous(x) => {
                            cats.insert(x.to_string());
                        }
                        FeatureValue::Missing => return Err(TabularError::UnexpectedMissing(spec.name.clone())),
                    }
                }
                FeatureBins::Categorical { levels: cats.into_iter().enumerate().map(|(i, c)| (c, i)).collect() }
            }
        };
        features.insert(spec.name.clone(), bins);
    }
    Ok(BinningSpec { features })
}

/// Smoothed weight of evidence of one bin:
/// `ln(((good + s) / (G + s·n)) / ((bad + s) / (B + s·n)))`.
pub fn woe<T: Real>(good: T, bad: T, total_good: T, total_bad: T, smoothing: T, n_bins: usize) -> T {
    let n = T::from_usize(n_bins).unwrap();
    let pg = (good + smoothing) / (total_good + smoothing * n);
    let pb = (bad + smoothing) / (total_bad + smoothing * n);
    (pg / pb).ln()
}

/// Information value of a count table, `Σ (g_b/G − b_b/B) · woe_b` with the
/// same smoothed proportions as [`woe`].
pub fn iv_from_counts<T: Real>(goods: &[T], bads: &[T], smoothing: T) -> T {
    let n = goods.len();
    let g: T = goods.iter().copied().sum();
    let b: T = bads.iter().copied().sum();
    let nn = T::from_usize(n).unwrap();
    goods
        .iter()
        .zip(bads)
        .map(|(&gb, &bb)| {
            let pg = (gb + smoothing) / (g + smoothing * nn);
            let pb = (bb + smoothing) / (b + smoothing * nn);
            if pg == pb {
                T::zero()
            } else {
                (pg - pb) * (pg / pb).ln()
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub good: u64,
    pub bad: u64,
    pub woe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWoe {
    pub bins: Vec<BinStats>,
    pub iv: f64,
    pub total_good: u64,
    pub total_bad: u64,
}

/// Fitted encoder. Label 0 counts as good, label 1 as bad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoeTable {
    pub smoothing: f64,
    pub binning: BinningSpec,
    pub features: BTreeMap<String, FeatureWoe>,
}

impl WoeTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("woe table serializes")
    }
}

pub fn fit_woe(dataset: &Dataset, train: &[usize], binning: &BinningSpec, smoothing: f64) -> Result<WoeTable> {
    let (total_good, total_bad) = train.iter().fold((0u64, 0u64), |(g, b), &i| {
        if dataset.records[i].label == 1 {
            (g, b + 1)
        } else {
            (g + 1, b)
        }
    });
    if total_good == 0 || total_bad == 0 {
        return Err(TabularError::SingleClassTrain);
    }
    let mut features = BTreeMap::new();
    for (name, bins) in &binning.features {
        let n = bins.n_bins();
        let mut good = vec![0u64; n];
        let mut bad = vec![0u64; n];
        for &i in train {
            let rec = &dataset.records[i];
            let v = rec.features.get(name).ok_or_else(|| TabularError::UnknownFeature(name.clone()))?;
            if v.is_missing() {
                return Err(TabularError::UnexpectedMissing(name.clone()));
            }
            if let Some(b) = bins.bin_of(v) {
                if rec.label == 1 {
                    bad[b] += 1;
                } else {
                    good[b] += 1;
                }
            }
        }
        let (g, b) = (total_good as f64, total_bad as f64);
        let stats: Vec<BinStats> = good
            .iter()
            .zip(&bad)
            .map(|(&gb, &bb)| BinStats { good: gb, bad: bb, woe: woe(gb as f64, bb as f64, g, b, smoothing, n) })
            .collect();
        let gf: Vec<f64> = good.iter().map(|&x| x as f64).collect();
        let bf: Vec<f64> = bad.iter().map(|&x| x as f64).collect();
        let iv = iv_from_counts(&gf, &bf, smoothing).max(0.0);
        features.insert(name.clone(), FeatureWoe { bins: stats, iv, total_good, total_bad });
    }
    Ok(WoeTable { smoothing, binning: binning.clone(), features })
}

pub fn information_value(table: &WoeTable, feature: &str) -> Result<f64> {
    table
        .features
        .get(feature)
        .map(|f| f.iv)
        .ok_or_else(|| TabularError::UnknownFeature(feature.to_string()))
}

/// Keeps features with `lo < IV < hi`, in `order`.
pub fn select_by_iv<'a>(ivs: &BTreeMap<String, f64>, order: impl IntoIterator<Item = &'a str>, lo: f64, hi: f64) -> Vec<String> {
    order
        .into_iter()
        .filter(|name| ivs.get(*name).is_some_and(|&iv| iv > lo && iv < hi))
        .map(str::to_string)
        .collect()
}

/// Row ids, column names and a dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix<T: Real = f64> {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    pub data: Matrix<T>,
}

impl<T: Real> EncodedMatrix<T> {
    pub fn new(ids: Vec<String>, columns: Vec<String>, data: Matrix<T>) -> Self {
        assert_eq!(ids.len(), data.rows());
        assert_eq!(columns.len(), data.cols());
        Self { ids, columns, data }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            columns: self.columns.clone(),
            data: self.data.select_rows(idx),
        }
    }

    pub fn select_columns(&self, names: &[String]) -> Option<Self> {
        let idx: Option<Vec<usize>> = names.iter().map(|n| self.columns.iter().position(|c| c == n)).collect();
        let idx = idx?;
        Some(Self { ids: self.ids.clone(), columns: names.to_vec(), data: self.data.select_columns(&idx) })
    }
}

/// Variance inflation factor of each column against the others (with intercept).
pub fn vif_values<T: Real>(columns: &[Vec<T>]) -> Vec<T> {
    (0..columns.len())
        .map(|k| {
            let others: Vec<Vec<T>> =
                columns.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, c)| c.clone()).collect();
            let r2 = r_squared(&columns[k], &others);
            let slack = T::one() - r2;
            if slack <= T::of(1e-12) {
                T::infinity()
            } else {
                T::one() / slack
            }
        })
        .collect()
}

/// Iteratively drops the column with the largest VIF while it exceeds
/// `threshold`. On ties the later column goes. Survivors keep their order.
pub fn vif_filter<T: Real>(matrix: &EncodedMatrix<T>, threshold: T) -> Result<Vec<String>> {
    let (rows, cols) = (matrix.data.rows(), matrix.data.cols());
    if cols < 2 {
        return Ok(matrix.columns.clone());
    }
    if rows < cols || rows < 2 {
        return Err(TabularError::TooFewRows { rows, cols });
    }
    let mut keep: Vec<usize> = (0..cols).collect();
    while keep.len() > 1 {
        let data: Vec<Vec<T>> = keep.iter().map(|&c| matrix.data.column(c)).collect();
        let vifs = vif_values(&data);
        let (worst, vmax) = vifs
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, &v)| if v >= acc.1 { (i, v) } else { acc });
        if vmax <= threshold {
            break;
        }
        keep.remove(worst);
    }
    Ok(keep.into_iter().map(|c| matrix.columns[c].clone()).collect())
}

/// WoE-encodes the selected features; unseen categories encode as 0.
pub fn encode(dataset: &Dataset, table: &WoeTable, selected: &[String]) -> Result<EncodedMatrix<f64>> {
    let mut data = Matrix::zeros(dataset.len(), selected.len());
    for (c, name) in selected.iter().enumerate() {
        let fw = table.features.get(name).ok_or_else(|| TabularError::UnfittedFeature(name.clone()))?;
        let bins = table.binning.features.get(name).ok_or_else(|| TabularError::UnfittedFeature(name.clone()))?;
        for (r, rec) in dataset.records.iter().enumerate() {
            let v = rec.features.get(name).ok_or_else(|| TabularError::UnknownFeature(name.clone()))?;
            if v.is_missing() {
                return Err(TabularError::UnexpectedMissing(name.clone()));
            }
            let w = bins.bin_of(v).map_or(0.0, |b| fw.bins[b].woe);
            data.set(r, c, w);
        }
    }
    Ok(EncodedMatrix::new(dataset.ids(), selected.to_vec(), data))
}
