use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{load_data, read_json, to_json, with_pool, write_file, write_manifest, PipelineConfig, PredictionArtifact, Selection, TrainedRow, PREDICTIONS_FILE, REPORT_FILE};
use crate::econ::{curve_csv, difference_csv, economics_of, profit_curve, profit_difference, profit_max_threshold, EconConfig};
use crate::eval::{bootstrap, pr_points, roc_points, topk_metrics, EvalError, Metric, MetricEstimate, ScoredSet};
use crate::model::Variant;
use crate::Error;

/// Difference of the combined and structured mean estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub mean_difference: f64,
    /// The two 95% intervals do not overlap.
    pub disjoint_ci: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub featurizer: Option<String>,
    pub source: Option<String>,
    /// Variant → metric → estimate; `null` where the combination was not
    /// trained or every resample was degenerate.
    pub cells: BTreeMap<Variant, BTreeMap<Metric, Option<MetricEstimate>>>,
    pub combined_vs_structured: BTreeMap<Metric, Option<Gap>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub test_size: usize,
    pub test_defaults: usize,
    pub model_seeds: Vec<u64>,
    pub resamples: usize,
    pub master_seed: u64,
    pub metrics: Vec<Metric>,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn cell(&self, featurizer: Option<&str>, source: Option<&str>, variant: Variant, metric: Metric) -> Option<&MetricEstimate> {
        self.rows
            .iter()
            .find(|r| r.featurizer.as_deref() == featurizer && r.source.as_deref() == source)?
            .cells
            .get(&variant)?
            .get(&metric)?
            .as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkRow {
    pub variant: Variant,
    pub featurizer: Option<String>,
    pub source: Option<String>,
    /// Cutoff at the reference test size; `None` for an explicit `--k`.
    pub k_reference: Option<usize>,
    pub k: usize,
    /// Means over the model seeds.
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// (featurizer, source) rows of the report, in config order.
fn report_rows(cfg: &PipelineConfig) -> Vec<(Option<String>, Option<String>)> {
    let mut out = Vec::new();
    for f in &cfg.text.featurizers {
        for s in &cfg.text.sources {
            out.push((Some(f.clone()), Some(s.clone())));
        }
    }
    if out.is_empty() {
        out.push((None, None));
    }
    out
}

fn scored_runs(pred: &PredictionArtifact, row: &TrainedRow) -> Result<Vec<ScoredSet<f64>>, Error> {
    row.runs
        .iter()
        .map(|r| Ok(ScoredSet::new(r.test_scores.clone(), pred.test_labels.clone(), pred.test_ids.clone())?))
        .collect()
}

fn estimate(cfg: &PipelineConfig, pred: &PredictionArtifact, row: &TrainedRow, metric: Metric) -> Result<Option<MetricEstimate>, Error> {
    let runs = scored_runs(pred, row)?;
    let b = &cfg.bootstrap;
    match bootstrap(metric, &runs, b.resamples, b.master_seed, b.workers) {
        Ok(e) => Ok(Some(e)),
        Err(EvalError::AllDegenerate) => {
            log::warn!("{} {metric}: every resample degenerate", row.key());
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn mean_scored(pred: &PredictionArtifact, row: &TrainedRow) -> Result<ScoredSet<f64>, Error> {
    Ok(ScoredSet::new(row.mean_scores(), pred.test_labels.clone(), pred.test_ids.clone())?)
}

fn points_csv(header: &str, pts: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in pts {
        let _ = writeln!(s, "{a:.6},{b:.6}");
    }
    s
}

fn load_predictions(cfg: &PipelineConfig) -> Result<PredictionArtifact, Error> {
    let pred: PredictionArtifact = read_json(&cfg.output_dir.join(PREDICTIONS_FILE))?;
    if pred.config_hash != cfg.hash() {
        log::warn!("predictions.json was produced under a different config");
    }
    Ok(pred)
}

fn selected_rows<'a>(pred: &'a PredictionArtifact, sel: &'a Selection) -> impl Iterator<Item = &'a TrainedRow> {
    pred.rows
        .iter()
        .filter(|r| sel.wants_variant(r.variant) && r.source.as_deref().is_none_or(|s| sel.wants_source(s)))
}

/// Bootstrap metric table, top-k table and ROC/PR point exports.
pub fn run_evaluate(cfg: &PipelineConfig, sel: &Selection) -> Result<EvalReport, Error> {
    cfg.validate(false)?;
    let pred = load_predictions(cfg)?;
    with_pool(cfg.bootstrap.workers, || evaluate(cfg, &pred, sel))?
}

fn evaluate(cfg: &PipelineConfig, pred: &PredictionArtifact, sel: &Selection) -> Result<EvalReport, Error> {
    let structured = pred.find(Variant::Structured, None, None).filter(|_| sel.wants_variant(Variant::Structured));
    let mut structured_cells = BTreeMap::new();
    for &m in &cfg.metrics {
        let e = match structured {
            Some(r) => estimate(cfg, pred, r, m)?,
            None => None,
        };
        structured_cells.insert(m, e);
    }

    let mut rows = Vec::new();
    for (f, s) in report_rows(cfg) {
        let mut cells = BTreeMap::new();
        cells.insert(Variant::Structured, structured_cells.clone());
        for v in [Variant::Text, Variant::Combined] {
            let trained = pred
                .find(v, f.as_deref(), s.as_deref())
                .filter(|r| sel.wants_variant(v) && r.source.as_deref().is_none_or(|x| sel.wants_source(x)));
            let mut per_metric = BTreeMap::new();
            for &m in &cfg.metrics {
                let e = match trained {
                    Some(r) => estimate(cfg, pred, r, m)?,
                    None => None,
                };
                per_metric.insert(m, e);
            }
            cells.insert(v, per_metric);
        }
        let combined_vs_structured = cfg
            .metrics
            .iter()
            .map(|&m| {
                let gap = match (&cells[&Variant::Combined][&m], &cells[&Variant::Structured][&m]) {
                    (Some(c), Some(s)) => Some(Gap {
                        mean_difference: c.mean - s.mean,
                        disjoint_ci: c.ci_low > s.ci_high || s.ci_low > c.ci_high,
                    }),
                    _ => None,
                };
                (m, gap)
            })
            .collect();
        rows.push(ReportRow { featurizer: f, source: s, cells, combined_vs_structured });
    }

    let b = &cfg.bootstrap;
    let report = EvalReport {
        config_hash: cfg.hash(),
        test_size: pred.test_ids.len(),
        test_defaults: pred.test_labels.iter().filter(|&&l| l == 1).count(),
        model_seeds: pred.model_seeds.clone(),
        resamples: b.resamples,
        master_seed: b.master_seed,
        metrics: cfg.metrics.clone(),
        rows,
    };
    let mut outputs: Vec<PathBuf> = Vec::new();
    let path = cfg.output_dir.join(REPORT_FILE);
    write_file(&path, &to_json(&report))?;
    outputs.push(path);

    let n_test = pred.test_ids.len();
    let cutoffs: Vec<(Option<usize>, usize)> = match sel.k {
        Some(k) => vec![(None, k)],
        None => cfg.topk.k.iter().copied().map(Some).zip(cfg.topk.scaled(n_test)).collect(),
    };
    let mut topk = Vec::new();
    for row in selected_rows(pred, sel) {
        for &(k_reference, k) in &cutoffs {
            let mut acc = (0.0, 0.0, 0.0);
            for run in scored_runs(pred, row)? {
                let t = topk_metrics(&run, k)?;
                acc = (acc.0 + t.recall, acc.1 + t.precision, acc.2 + t.f1);
            }
            let n = row.runs.len() as f64;
            topk.push(TopkRow {
                variant: row.variant,
                featurizer: row.featurizer.clone(),
                source: row.source.clone(),
                k_reference,
                k,
                recall: acc.0 / n,
                precision: acc.1 / n,
                f1: acc.2 / n,
            });
        }
        let mean = mean_scored(pred, row)?;
        let roc = cfg.output_dir.join(format!("curves/roc_{}.csv", row.key()));
        write_file(&roc, &points_csv("fpr,tpr", &roc_points(&mean)?))?;
        let pr = cfg.output_dir.join(format!("curves/pr_{}.csv", row.key()));
        write_file(&pr, &points_csv("recall,precision", &pr_points(&mean)?))?;
        outputs.extend([roc, pr]);
    }
    let mut csv = String::from("variant,featurizer,source,k_reference,k,recall,precision,f1\n");
    for t in &topk {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.6},{:.6},{:.6}",
            t.variant,
            t.featurizer.as_deref().unwrap_or(""),
            t.source.as_deref().unwrap_or(""),
            t.k_reference.map_or(String::new(), |k| k.to_string()),
            t.k,
            t.recall,
            t.precision,
            t.f1
        );
    }
    let tj = cfg.output_dir.join("topk.json");
    let tc = cfg.output_dir.join("topk.csv");
    write_file(&tj, &to_json(&topk))?;
    write_file(&tc, &csv)?;
    outputs.extend([tj, tc]);
    write_manifest(cfg, "evaluate", &outputs)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitSummary {
    pub variant: Variant,
    pub featurizer: Option<String>,
    pub source: Option<String>,
    pub profit_accept_all: f64,
    pub best_k: usize,
    pub best_threshold: Option<f64>,
    pub best_profit: f64,
}

/// Profit curves on the test portfolio, ranked by the seed-averaged
/// probability, with differences against the structured model.
pub fn run_profit(cfg: &PipelineConfig, sel: &Selection) -> Result<Vec<ProfitSummary>, Error> {
    cfg.validate(false)?;
    let pred = load_predictions(cfg)?;
    let ds = load_data(cfg)?;
    let economics = economics_of(&ds);
    let ecfg = EconConfig::new(cfg.econ.lgd)?;
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    let structured = match pred.find(Variant::Structured, None, None) {
        Some(r) => Some(profit_curve(&mean_scored(&pred, r)?, &economics, &ecfg)?),
        None => None,
    };
    for row in selected_rows(&pred, sel) {
        let curve = profit_curve(&mean_scored(&pred, row)?, &economics, &ecfg)?;
        let p = cfg.output_dir.join(format!("profit/curve_{}.csv", row.key()));
        write_file(&p, &curve_csv(&curve))?;
        outputs.push(p);
        if let (Some(base), true) = (&structured, row.variant != Variant::Structured) {
            let diff = profit_difference(&curve, base)?;
            let p = cfg.output_dir.join(format!("profit/diff_{}.csv", row.key()));
            write_file(&p, &difference_csv(&diff))?;
            outputs.push(p);
        }
        let best = profit_max_threshold(&curve)?;
        summaries.push(ProfitSummary {
            variant: row.variant,
            featurizer: row.featurizer.clone(),
            source: row.source.clone(),
            profit_accept_all: curve.points[0].profit,
            best_k: best.k,
            best_threshold: best.threshold,
            best_profit: best.profit,
        });
    }
    let p = cfg.output_dir.join("profit/max.json");
    write_file(&p, &to_json(&summaries))?;
    outputs.push(p);
    write_manifest(cfg, "profit", &outputs)?;
    Ok(summaries)
}
