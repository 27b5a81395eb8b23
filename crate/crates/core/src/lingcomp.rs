//! Human-vs-refined corpus comparisons: vector similarity, rank tests,
//! proportion tests and dictionary category profiles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::num::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LingError {
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("empty sample")]
    EmptySample,
    #[error("both proportions have zero variance")]
    ZeroVariance,
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("invalid proportion or count")]
    InvalidProportion,
    #[error("dictionary line {line}: {detail}")]
    Dictionary { line: usize, detail: String },
    #[error("cannot read dictionary: {0}")]
    Io(String),
}

pub fn cosine_similarity<T: Real>(u: &[T], v: &[T]) -> Result<T, LingError> {
    if u.len() != v.len() {
        return Err(LingError::DimMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nv = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if nu == T::zero() || nv == T::zero() {
        return Err(LingError::ZeroVector);
    }
    let dot: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    Ok((dot / (nu * nv)).max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Largest smaller-sample size for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 8;

/// Tie groups of the pooled sample in ascending order, as (count in a, count in b).
fn tie_groups<T: Real>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let mut pooled: Vec<(T, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&y| (y, false))).collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut prev: Option<T> = None;
    for (v, in_a) in pooled {
        if prev != Some(v) {
            groups.push((0, 0));
            prev = Some(v);
        }
        let g = groups.last_mut().unwrap();
        if in_a {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Null distribution of 2U for a sample of size `n` drawn from the pooled
/// tie groups, as counts indexed by 2U.
fn exact_distribution(sizes: &[usize], n: usize, m: usize) -> Vec<f64> {
    // dp[c][2u]: ways to pick c members of the small sample so far
    let max2u = 2 * n * m;
    let mut dp = vec![vec![0.0f64; max2u + 1]; n + 1];
    dp[0][0] = 1.0;
    let mut seen = 0;
    for &g in sizes {
        let mut next = vec![vec![0.0f64; max2u + 1]; n + 1];
        for c in 0..=n.min(seen) {
            let others_below = seen - c;
            for (u2, &ways) in dp[c].iter().enumerate() {
                if ways == 0.0 {
                    continue;
                }
                for j in 0..=g.min(n - c) {
                    if others_below + (g - j) > m {
                        continue;
                    }
                    let add = j * (2 * others_below + (g - j));
                    next[c + j][u2 + add] += ways * binomial(g, j);
                }
            }
        }
        dp = next;
        seen += g;
    }
    dp.swap_remove(n)
}

/// Mann-Whitney U with exact p when the smaller sample has at most
/// [`EXACT_LIMIT`] members, otherwise the tie-corrected normal approximation
/// with continuity correction.
pub fn mann_whitney_u<T: Real>(a: &[T], b: &[T]) -> Result<MannWhitney, LingError> {
    if a.is_empty() || b.is_empty() {
        return Err(LingError::EmptySample);
    }
    let (n, m) = (a.len(), b.len());
    let groups = tie_groups(a, b);
    let mut u2 = 0usize;
    let mut b_below = 0usize;
    for &(ga, gb) in &groups {
        u2 += ga * (2 * b_below + gb);
        b_below += gb;
    }
    let u = u2 as f64 / 2.0;
    let nm = (n * m) as f64;

    if n.min(m) <= EXACT_LIMIT {
        let sizes: Vec<usize> = groups.iter().map(|g| g.0 + g.1).collect();
        // distribution of the smaller sample's U; map the observed U onto it
        let (small, large, obs2) = if n <= m { (n, m, u2) } else { (m, n, 2 * n * m - u2) };
        let dist = exact_distribution(&sizes, small, large);
        let total: f64 = dist.iter().sum();
        let lower: f64 = dist[..=obs2].iter().sum();
        let upper: f64 = dist[obs2..].iter().sum();
        let p = (2.0 * lower.min(upper) / total).min(1.0);
        return Ok(MannWhitney { u, p_two_sided: p, exact: true });
    }

    let big_n = (n + m) as f64;
    let tie_term: f64 = groups
        .iter()
        .map(|&(ga, gb)| {
            let t = (ga + gb) as f64;
            t * t * t - t
        })
        .sum();
    let var = nm / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, p_two_sided: 1.0, exact: false });
    }
    let z = ((u - nm / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * standard_normal().sf(z)).min(1.0);
    Ok(MannWhitney { u, p_two_sided: p, exact: false })
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Difference of proportions over its unpooled standard error; positive when
/// corpus 2 uses the category more.
pub fn welch_proportion_t<T: Real>(f1: T, n1: usize, f2: T, n2: usize) -> Result<T, LingError> {
    let unit = |f: T| f >= T::zero() && f <= T::one();
    if !unit(f1) || !unit(f2) || n1 == 0 || n2 == 0 {
        return Err(LingError::InvalidProportion);
    }
    let var = f1 * (T::one() - f1) / T::of(n1 as f64) + f2 * (T::one() - f2) / T::of(n2 as f64);
    if var == T::zero() {
        return Err(LingError::ZeroVariance);
    }
    Ok((f2 - f1) / var.sqrt())
}

/// Per-test significance level after Bonferroni correction over `m` tests.
pub fn bonferroni_level(alpha: f64, m: usize) -> f64 {
    alpha / m as f64
}

/// Two-sided standard-normal critical value at level `alpha`.
pub fn critical_value(alpha: f64) -> f64 {
    standard_normal().inverse_cdf(1.0 - alpha / 2.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Entry {
    Exact(String),
    Prefix(String),
}

/// Category name to word list; entries ending in `*` match by prefix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryDictionary {
    categories: BTreeMap<String, Vec<Entry>>,
}

impl CategoryDictionary {
    pub fn load(path: &Path) -> Result<Self, LingError> {
        let text = std::fs::read_to_string(path).map_err(|e| LingError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses `%category <name>` headers each followed by one entry per line.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, LingError> {
        let mut categories: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        let err = |line: usize, detail: &str| LingError::Dictionary { line, detail: detail.into() };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if let Some(rest) = t.strip_prefix("%category") {
                let name = rest.trim();
                if name.is_empty() || !rest.starts_with(char::is_whitespace) {
                    return Err(err(line, "header needs a category name"));
                }
                if categories.contains_key(name) {
                    return Err(err(line, "duplicate category"));
                }
                categories.insert(name.to_string(), Vec::new());
                current = Some(name.to_string());
                continue;
            }
            let Some(cat) = &current else {
                return Err(err(line, "entry before any %category header"));
            };
            let entry = match t.strip_suffix('*') {
                Some(stem) if stem.is_empty() || stem.contains('*') => return Err(err(line, "bad prefix pattern")),
                Some(stem) => Entry::Prefix(stem.to_string()),
                None if t.contains('*') => return Err(err(line, "'*' allowed only at the end")),
                None => Entry::Exact(t.to_string()),
            };
            categories.get_mut(cat).unwrap().push(entry);
        }
        if let Some((name, _)) = categories.iter().find(|(_, e)| e.is_empty()) {
            return Err(LingError::Dictionary { line: 0, detail: format!("category {name:?} has no entries") });
        }
        Ok(Self { categories })
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    fn matches(entries: &[Entry], token: &str) -> bool {
        entries.iter().any(|e| match e {
            Entry::Exact(w) => w == token,
            Entry::Prefix(p) => token.starts_with(p.as_str()),
        })
    }
}

/// Matched-token share per category; a token may count toward several.
pub fn category_frequencies<S: AsRef<str>>(
    docs: &[Vec<S>],
    dict: &CategoryDictionary,
) -> Result<(BTreeMap<String, f64>, usize), LingError> {
    let total: usize = docs.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(LingError::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = dict.names().map(|n| (n, 0)).collect();
    for tok in docs.iter().flatten() {
        for (name, entries) in &dict.categories {
            if CategoryDictionary::matches(entries, tok.as_ref()) {
                *counts.get_mut(name.as_str()).unwrap() += 1;
            }
        }
    }
    let freqs = counts.into_iter().map(|(k, c)| (k.to_string(), c as f64 / total as f64)).collect();
    Ok((freqs, total))
}

pub const SIGNIFICANCE_LEVELS: [f64; 3] = [0.1, 0.05, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryComparison {
    pub category: String,
    pub f1: f64,
    pub f2: f64,
    pub n1: usize,
    pub n2: usize,
    pub t: f64,
    /// Significance at each of [`SIGNIFICANCE_LEVELS`] divided by M.
    pub significant: [bool; 3],
}

impl CategoryComparison {
    pub fn stars(&self) -> String {
        "*".repeat(self.significant.iter().filter(|&&s| s).count())
    }
}

/// Category-by-category Welch comparison of two corpora with Bonferroni
/// thresholds over `m` simultaneous tests. A category unused in both
/// corpora gets t = 0.
pub fn compare_corpora<S: AsRef<str>>(
    corpus1: &[Vec<S>],
    corpus2: &[Vec<S>],
    dict: &CategoryDictionary,
    m: usize,
) -> Result<Vec<CategoryComparison>, LingError> {
    let (f1s, n1) = category_frequencies(corpus1, dict)?;
    let (f2s, n2) = category_frequencies(corpus2, dict)?;
    let crit: Vec<f64> = SIGNIFICANCE_LEVELS.iter().map(|&a| critical_value(bonferroni_level(a, m.max(1)))).collect();
    f1s.iter()
        .map(|(cat, &f1)| {
            let f2 = f2s[cat];
            let t = match welch_proportion_t(f1, n1, f2, n2) {
                Ok(t) => t,
                Err(LingError::ZeroVariance) if f1 == f2 => 0.0,
                Err(e) => return Err(e),
            };
            let significant = [0, 1, 2].map(|i| t.abs() > crit[i]);
            Ok(CategoryComparison { category: cat.clone(), f1, f2, n1, n2, t, significant })
        })
        .collect()
}

pub fn comparison_csv(rows: &[CategoryComparison]) -> String {
    let mut out = String::from("category,f_human,f_refined,n_human,n_refined,t,p_flags\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6},{:.6},{},{},{:.4},{}", r.category, r.f1, r.f2, r.n1, r.n2, r.t, r.stars());
    }
    out
}
