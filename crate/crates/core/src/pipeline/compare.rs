use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{load_data, parse_source, texts_of, to_json, write_file, write_manifest, PipelineConfig};
use crate::corpus::{text_length_stats, LengthStats, TextSelector};
use crate::lingcomp::{compare_corpora, comparison_csv, mann_whitney_u, CategoryDictionary, MannWhitney};
use crate::textfeat::{fit_tfidf, sparse_cosine};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
    /// Pairs skipped because one text had no known terms.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub refined_source: String,
    /// Label → token-count summary.
    pub length_human: BTreeMap<u8, LengthStats>,
    pub length_refined: BTreeMap<u8, LengthStats>,
    /// Token counts of human versus refined texts.
    pub length_test: MannWhitneyReport,
    /// Refined token counts of defaulters versus repaid loans.
    pub refined_length_by_label: Option<MannWhitneyReport>,
    /// TF-IDF cosine between each record's human and refined text.
    pub tfidf_similarity: SimilaritySummary,
    pub dictionary_categories: Option<usize>,
    pub bonferroni_m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyReport {
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

impl From<MannWhitney> for MannWhitneyReport {
    fn from(m: MannWhitney) -> Self {
        Self { u: m.u, p_two_sided: m.p_two_sided, exact: m.exact }
    }
}

/// Human-versus-refined text comparison: lengths, rank test, lexical
/// similarity and dictionary category frequencies.
pub fn run_compare(cfg: &PipelineConfig) -> Result<CompareReport, Error> {
    cfg.validate(true)?;
    let ds = load_data(cfg)?;
    let refined = parse_source(&cfg.compare.refined_source).map_err(Error::Pipeline)?;
    let [refined] = refined[..] else {
        return Err(Error::ConfigInvalid { path: "compare.refined_source".into(), detail: "must name a single text".into() });
    };
    let tok = cfg.tokenizer.build();
    let human_tokens: Vec<Vec<String>> = texts_of(&ds, TextSelector::Human)?.iter().map(|t| tok.tokenize(t)).collect();
    let refined_tokens: Vec<Vec<String>> = texts_of(&ds, refined)?.iter().map(|t| tok.tokenize(t)).collect();

    let len = |v: &[Vec<String>]| v.iter().map(|t| t.len() as f64).collect::<Vec<f64>>();
    let (lh, lr) = (len(&human_tokens), len(&refined_tokens));
    let length_test = mann_whitney_u(&lr, &lh)?.into();
    let by_label = |l: u8| -> Vec<f64> { ds.records.iter().zip(&lr).filter(|(r, _)| r.label == l).map(|(_, &x)| x).collect() };
    let refined_length_by_label = mann_whitney_u(&by_label(1), &by_label(0)).ok().map(Into::into);

    let mut all_docs = human_tokens.clone();
    all_docs.extend(refined_tokens.iter().cloned());
    let tfidf = fit_tfidf(&all_docs)?;
    let mut sims = Vec::new();
    let mut skipped = 0;
    for (h, r) in human_tokens.iter().zip(&refined_tokens) {
        let (a, b) = (tfidf.transform(h), tfidf.transform(r));
        if a.is_empty() || b.is_empty() {
            skipped += 1;
        } else {
            sims.push(sparse_cosine(&a, &b));
        }
    }
    let n = sims.len();
    let mean = if n > 0 { sims.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let sd = if n > 1 { (sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };

    let mut outputs = Vec::new();
    let (mut dictionary_categories, mut bonferroni_m) = (None, None);
    if let Some(path) = &cfg.compare.dictionary {
        let dict = CategoryDictionary::load(path)?;
        let m = cfg.compare.m.unwrap_or(dict.len());
        let rows = compare_corpora(&human_tokens, &refined_tokens, &dict, m)?;
        let p = cfg.output_dir.join("compare/categories.csv");
        write_file(&p, &comparison_csv(&rows))?;
        outputs.push(p);
        dictionary_categories = Some(dict.len());
        bonferroni_m = Some(m);
    }

    let report = CompareReport {
        refined_source: cfg.compare.refined_source.clone(),
        length_human: text_length_stats(&ds, TextSelector::Human, &tok)?,
        length_refined: text_length_stats(&ds, refined, &tok)?,
        length_test,
        refined_length_by_label,
        tfidf_similarity: SimilaritySummary { mean, sd, count: n, skipped },
        dictionary_categories,
        bonferroni_m,
    };
    let p = cfg.output_dir.join("compare/report.json");
    write_file(&p, &to_json(&report))?;
    outputs.push(p);
    write_manifest(cfg, "compare", &outputs)?;
    Ok(report)
}
