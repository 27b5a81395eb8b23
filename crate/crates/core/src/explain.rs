//! Perturbation-based local attribution over words or phrases, selection of
//! borderline cases and cross-case aggregation of unit importance.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{solve, Matrix};
use crate::rng;
use crate::textfeat::Tokenizer;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("text has no units to explain")]
    EmptyText,
    #[error("perturbation design is degenerate")]
    DegenerateDesign,
    #[error("input arrays are not aligned")]
    Misaligned,
    #[error("no attributions to aggregate")]
    NoCases,
    #[error("csv: {0}")]
    Csv(String),
}

/// Marks that end a phrase.
pub const PHRASE_PUNCTUATION: &str = ",.;!?，。；！？、";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Word,
    Phrase,
}

impl std::str::FromStr for Granularity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "word" => Ok(Self::Word),
            "phrase" => Ok(Self::Phrase),
            _ => Err(format!("unknown granularity {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub granularity: Granularity,
    pub units: Vec<String>,
    /// Punctuation that followed each unit in the source text (phrase mode).
    trailing: Vec<String>,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Text made of the units whose mask bit is set, in original order.
    pub fn reconstruct(&self, mask: &[bool]) -> String {
        self.units
            .iter()
            .zip(&self.trailing)
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|((u, p), _)| format!("{u}{p}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn segment(text: &str, granularity: Granularity, tokenizer: &Tokenizer) -> Result<Segmentation, ExplainError> {
    let (units, trailing) = match granularity {
        Granularity::Word => {
            let units = tokenizer.tokenize(text);
            let trailing = vec![String::new(); units.len()];
            (units, trailing)
        }
        Granularity::Phrase => {
            let is_mark = |c: char| PHRASE_PUNCTUATION.contains(c);
            let (mut units, mut trailing) = (Vec::new(), Vec::new());
            let mut rest = text;
            while !rest.is_empty() {
                let end = rest.find(is_mark).unwrap_or(rest.len());
                let (body, tail) = rest.split_at(end);
                let marks_end = tail.find(|c: char| !is_mark(c)).unwrap_or(tail.len());
                let (marks, next) = tail.split_at(marks_end);
                let body = body.trim();
                if !body.is_empty() {
                    units.push(body.to_string());
                    trailing.push(marks.to_string());
                }
                rest = next;
            }
            (units, trailing)
        }
    };
    if units.is_empty() {
        return Err(ExplainError::EmptyText);
    }
    Ok(Segmentation { granularity, units, trailing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(m)` for m units.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self { n_samples: 1000, kernel_width: None, ridge: 1.0, top_k: 15, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub unit: String,
    /// Position of the unit in the segmentation.
    pub position: usize,
    /// Positive when the unit's presence raises the predicted default probability.
    pub weight: f64,
    /// Perturbed samples in which the unit was kept.
    pub support: usize,
}

fn draw_mask(m: usize, seed: u64, s: usize) -> Vec<bool> {
    if s == 0 {
        return vec![true; m];
    }
    let mut r = rng::rng_from(seed, &[s as u64]);
    let removed = r.random_range(1..=m);
    let mut mask = vec![true; m];
    for i in sample(&mut r, m, removed) {
        mask[i] = false;
    }
    mask
}

/// Fits a locally weighted linear surrogate of `score_fn` on random unit
/// removals and returns the `top_k` units by absolute coefficient.
pub fn lime_explain<F>(score_fn: F, seg: &Segmentation, cfg: &LimeConfig) -> Result<Vec<Attribution>, ExplainError>
where
    F: Fn(&str) -> f64 + Sync,
{
    let m = seg.len();
    if m == 0 {
        return Err(ExplainError::EmptyText);
    }
    let masks: Vec<Vec<bool>> = (0..cfg.n_samples.max(1)).map(|s| draw_mask(m, cfg.seed, s)).collect();
    if masks.iter().all(|mk| mk == &masks[0]) {
        return Err(ExplainError::DegenerateDesign);
    }
    let scores: Vec<f64> = masks.par_iter().map(|mk| score_fn(&seg.reconstruct(mk))).collect();
    let width = cfg.kernel_width.unwrap_or(0.75 * (m as f64).sqrt());
    let weights: Vec<f64> = masks
        .iter()
        .map(|mk| {
            let kept = mk.iter().filter(|&&b| b).count() as f64;
            let d = 1.0 - (kept / m as f64).sqrt();
            (-d * d / (width * width)).exp()
        })
        .collect();
    let coef = weighted_ridge(&masks, &scores, &weights, cfg.ridge).ok_or(ExplainError::DegenerateDesign)?;

    let mut out: Vec<Attribution> = (0..m)
        .map(|j| Attribution {
            unit: seg.units[j].clone(),
            position: j,
            weight: coef[j],
            support: masks.iter().filter(|mk| mk[j]).count(),
        })
        .collect();
    out.sort_by(|a, b| b.weight.abs().partial_cmp(&a.weight.abs()).unwrap().then(a.position.cmp(&b.position)));
    out.truncate(cfg.top_k);
    Ok(out)
}

/// Slopes of a weighted least-squares fit with an unpenalized intercept.
fn weighted_ridge(masks: &[Vec<bool>], y: &[f64], w: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let m = masks[0].len();
    let wsum: f64 = w.iter().sum();
    let x = |s: usize, j: usize| f64::from(u8::from(masks[s][j]));
    let xbar: Vec<f64> = (0..m).map(|j| (0..masks.len()).map(|s| w[s] * x(s, j)).sum::<f64>() / wsum).collect();
    let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let mut gram = Matrix::zeros(m, m);
    let mut rhs = vec![0.0; m];
    for s in 0..masks.len() {
        let xc: Vec<f64> = (0..m).map(|j| x(s, j) - xbar[j]).collect();
        let yc = y[s] - ybar;
        for i in 0..m {
            rhs[i] += w[s] * xc[i] * yc;
            for j in 0..m {
                gram.set(i, j, gram.get(i, j) + w[s] * xc[i] * xc[j]);
            }
        }
    }
    for i in 0..m {
        gram.set(i, i, gram.get(i, i) + ridge);
    }
    solve(&gram, &rhs, 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedCase {
    pub id: String,
    pub p_structured: f64,
    pub p_combined: f64,
    pub improvement: f64,
}

/// Cases the structured model found borderline and the combined model moved
/// toward the true label, best improvement first.
pub fn select_uncertain_cases(
    ids: &[String],
    structured: &[f64],
    combined: &[f64],
    labels: &[u8],
    band: (f64, f64),
    top_n: usize,
) -> Result<Vec<SelectedCase>, ExplainError> {
    let n = ids.len();
    if structured.len() != n || combined.len() != n || labels.len() != n {
        return Err(ExplainError::Misaligned);
    }
    let mut picked: Vec<SelectedCase> = (0..n)
        .filter(|&i| structured[i] >= band.0 && structured[i] <= band.1)
        .map(|i| {
            let y = f64::from(labels[i]);
            SelectedCase {
                id: ids[i].clone(),
                p_structured: structured[i],
                p_combined: combined[i],
                improvement: (structured[i] - y).abs() - (combined[i] - y).abs(),
            }
        })
        .filter(|c| c.improvement > 0.0)
        .collect();
    picked.sort_by(|a, b| b.improvement.partial_cmp(&a.improvement).unwrap().then_with(|| a.id.cmp(&b.id)));
    picked.truncate(top_n);
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitImportance {
    pub unit: String,
    pub mean_weight: f64,
    pub case_count: usize,
}

/// Mean signed weight per unit text over the cases in which it was
/// attributed, ranked by absolute mean. Repeated units within one case are
/// summed first.
pub fn aggregate_importance(cases: &[Vec<Attribution>], top: usize) -> Result<Vec<UnitImportance>, ExplainError> {
    if cases.is_empty() {
        return Err(ExplainError::NoCases);
    }
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for case in cases {
        let mut per_case: BTreeMap<&str, f64> = BTreeMap::new();
        for a in case {
            *per_case.entry(a.unit.as_str()).or_default() += a.weight;
        }
        for (unit, w) in per_case {
            let e = acc.entry(unit).or_default();
            e.0 += w;
            e.1 += 1;
        }
    }
    let mut out: Vec<UnitImportance> = acc
        .into_iter()
        .map(|(unit, (sum, count))| UnitImportance { unit: unit.to_string(), mean_weight: sum / count as f64, case_count: count })
        .collect();
    out.sort_by(|a, b| b.mean_weight.abs().partial_cmp(&a.mean_weight.abs()).unwrap().then_with(|| a.unit.cmp(&b.unit)));
    out.truncate(top);
    Ok(out)
}

pub fn importance_csv(rows: &[UnitImportance]) -> Result<String, ExplainError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| ExplainError::Csv(e.to_string());
    w.write_record(["rank", "unit", "mean_weight", "case_count"]).map_err(err)?;
    for (i, r) in rows.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.unit.clone(), format!("{:.6}", r.mean_weight), r.case_count.to_string()])
            .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| ExplainError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textfeat::TokenMode;

    fn words(text: &str) -> Segmentation {
        segment(text, Granularity::Word, &Tokenizer::default()).unwrap()
    }

    #[test]
    fn segmentation_examples() {
        let t = Tokenizer::default();
        assert_eq!(segment("a, b. c", Granularity::Phrase, &t).unwrap().units, ["a", "b", "c"]);
        assert_eq!(words("good repayment").units, ["good", "repayment"]);
        assert_eq!(segment("one phrase only", Granularity::Phrase, &t).unwrap().units, ["one phrase only"]);
        assert_eq!(segment(" ,. ", Granularity::Phrase, &t), Err(ExplainError::EmptyText));
        assert_eq!(segment("", Granularity::Word, &t), Err(ExplainError::EmptyText));
        let cjk = segment("收入稳定，无逾期。", Granularity::Phrase, &t).unwrap();
        assert_eq!(cjk.units, ["收入稳定", "无逾期"]);
    }

    #[test]
    fn full_mask_round_trips() {
        let t = Tokenizer::default();
        for text in ["Stable income, no overdue; owns a house!", "a, b. c", "plain words here"] {
            for g in [Granularity::Word, Granularity::Phrase] {
                let seg = segment(text, g, &t).unwrap();
                let full = seg.reconstruct(&vec![true; seg.len()]);
                assert_eq!(t.tokenize(&full), t.tokenize(text));
            }
        }
        let c = Tokenizer::new(TokenMode::Char);
        let seg = segment("收入稳定，无逾期。", Granularity::Word, &c).unwrap();
        assert_eq!(c.tokenize(&seg.reconstruct(&[true; 7])), c.tokenize("收入稳定，无逾期。"));
    }

    #[test]
    fn phrase_reconstruction_keeps_punctuation() {
        let seg = segment("a, b. c", Granularity::Phrase, &Tokenizer::default()).unwrap();
        assert_eq!(seg.reconstruct(&[true, false, true]), "a, c");
    }

    #[test]
    fn constant_scorer_gives_zero_weights() {
        let seg = words("one two three four five");
        let attr = lime_explain(|_| 0.3, &seg, &LimeConfig::default()).unwrap();
        assert!(attr.iter().all(|a| a.weight.abs() < 1e-9));
    }

    #[test]
    fn single_unit_closed_form() {
        let seg = words("overdue");
        let cfg = LimeConfig { ridge: 0.0, ..LimeConfig::default() };
        let attr = lime_explain(|t| if t.is_empty() { 0.2 } else { 0.7 }, &seg, &cfg).unwrap();
        assert!((attr[0].weight - 0.5).abs() < 1e-9);
        assert_eq!(attr[0].support, 1);
    }

    #[test]
    fn deterministic_and_signed() {
        let seg = words("overdue stable salary");
        let score = |t: &str| 0.2 + 0.5 * f64::from(u8::from(t.contains("overdue"))) - 0.1 * f64::from(u8::from(t.contains("stable")));
        let cfg = LimeConfig { seed: 9, ..LimeConfig::default() };
        let a = lime_explain(score, &seg, &cfg).unwrap();
        assert_eq!(a, lime_explain(score, &seg, &cfg).unwrap());
        assert_eq!(a[0].unit, "overdue");
        assert!(a[0].weight > 0.0);
        assert_eq!(a[1].unit, "stable");
        assert!(a[1].weight < 0.0);
    }

    #[test]
    fn single_sample_is_degenerate() {
        let cfg = LimeConfig { n_samples: 1, ..LimeConfig::default() };
        assert_eq!(lime_explain(|_| 0.0, &words("a b"), &cfg), Err(ExplainError::DegenerateDesign));
    }

    #[test]
    fn uncertain_case_rules() {
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let sel = select_uncertain_cases(&ids, &[0.5, 0.5, 0.7], &[0.9, 0.3, 0.99], &[1, 1, 1], (0.4, 0.6), 250).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].id, "a");
        assert!((sel[0].improvement - 0.4).abs() < 1e-12);
        assert_eq!(select_uncertain_cases(&ids, &[0.5], &[0.5], &[1], (0.4, 0.6), 1), Err(ExplainError::Misaligned));
    }

    fn attr(unit: &str, weight: f64) -> Attribution {
        Attribution { unit: unit.into(), position: 0, weight, support: 1 }
    }

    #[test]
    fn aggregation_cancels_and_ranks() {
        let cases = vec![vec![attr("x", 0.2), attr("y", 0.5)], vec![attr("x", -0.2), attr("z", -0.1)]];
        let agg = aggregate_importance(&cases, 15).unwrap();
        assert_eq!(agg.iter().map(|u| u.unit.as_str()).collect::<Vec<_>>(), ["y", "z", "x"]);
        assert_eq!(agg[2].mean_weight, 0.0);
        assert_eq!(agg[2].case_count, 2);
        let single = aggregate_importance(&cases[..1], 15).unwrap();
        assert_eq!(single[0].unit, "y");
        assert_eq!(aggregate_importance(&[], 15), Err(ExplainError::NoCases));
    }

    #[test]
    fn csv_quotes_phrases() {
        let rows = vec![UnitImportance { unit: "late, twice".into(), mean_weight: 0.25, case_count: 3 }];
        assert_eq!(importance_csv(&rows).unwrap(), "rank,unit,mean_weight,case_count\n1,\"late, twice\",0.250000,3\n");
    }
}
