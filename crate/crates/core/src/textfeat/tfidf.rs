use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::TextError;

/// Sorted `(column, value)` pairs.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub doc_count: usize,
}

/// Fits a smoothed-idf vocabulary: `idf = ln((1 + N) / (1 + df)) + 1`.
/// Columns are assigned in lexicographic token order.
pub fn fit_tfidf<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<TfidfModel, TextError> {
    if docs.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let uniq: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for t in uniq {
            *df.entry(t.to_string()).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (i, (tok, d)) in df.into_iter().enumerate() {
        vocabulary.insert(tok, i);
        idf.push(((1.0 + n) / (1.0 + d as f64)).ln() + 1.0);
    }
    Ok(TfidfModel { vocabulary, idf, doc_count: docs.len() })
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Raw-count tf times idf, L2-normalized. Out-of-vocabulary tokens are
    /// ignored; an all-OOV document maps to the zero vector.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(&c) = self.vocabulary.get(t.as_ref()) {
                *counts.entry(c).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().map(|(c, tf)| (c, tf * self.idf[c])).collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }

    pub fn transform_dense<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (c, x) in self.transform(tokens) {
            out[c] = x;
        }
        out
    }
}

/// Cosine of two sparse vectors; 0 when either is the zero vector.
pub fn sparse_cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut d) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                d += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    let na = a.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na * nb)
    }
}
