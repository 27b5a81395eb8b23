use std::path::PathBuf;

use serde::Serialize;

use super::{load_data, parse_source, read_json, to_json, write_file, write_manifest, with_pool, FeatureArtifact, PipelineConfig, PredictionArtifact, Selection, FEATURES_FILE, PREDICTIONS_FILE};
use crate::explain::{aggregate_importance, importance_csv, lime_explain, segment, select_uncertain_cases, Attribution, LimeConfig, SelectedCase};
use crate::model::{MlpModel, Variant};
use crate::rng::derive_seed;
use crate::Error;

#[derive(Serialize)]
struct CaseAttributions<'a> {
    id: &'a str,
    attributions: Vec<Attribution>,
}

fn cases_csv(cases: &[SelectedCase]) -> String {
    let mut s = String::from("id,p_structured,p_combined,improvement\n");
    for c in cases {
        s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", c.id, c.p_structured, c.p_combined, c.improvement));
    }
    s
}

/// Picks the test cases the combined model gets right where the structured
/// model is unsure, explains the combined score of each case's text and
/// aggregates unit importances per granularity.
pub fn run_explain(cfg: &PipelineConfig, sel: &Selection) -> Result<Vec<PathBuf>, Error> {
    cfg.validate(false)?;
    let art: FeatureArtifact = read_json(&cfg.output_dir.join(FEATURES_FILE))?;
    let pred: PredictionArtifact = read_json(&cfg.output_dir.join(PREDICTIONS_FILE))?;
    let ds = load_data(cfg)?;
    let e = &cfg.explain;
    let featurizer = e.featurizer.clone().or_else(|| cfg.text.featurizers.first().cloned());
    let source = sel.text_source.clone().or_else(|| e.text_source.clone()).or_else(|| cfg.text.sources.first().cloned());
    let (Some(featurizer), Some(source)) = (featurizer, source) else {
        return Err(Error::Pipeline("explain needs a text featurizer and source".into()));
    };
    let set = art
        .text_set(&featurizer, &source)
        .ok_or_else(|| Error::Pipeline(format!("no features for {featurizer} on {source}")))?;
    let structured = pred
        .find(Variant::Structured, None, None)
        .ok_or_else(|| Error::Pipeline("explain needs the structured model".into()))?;
    let combined = pred
        .find(Variant::Combined, Some(&featurizer), Some(&source))
        .ok_or_else(|| Error::Pipeline(format!("no combined model for {featurizer} on {source}")))?;

    let cases = select_uncertain_cases(
        &pred.test_ids,
        &structured.mean_scores(),
        &combined.mean_scores(),
        &pred.test_labels,
        e.band,
        e.top_n,
    )?;
    log::info!("explaining {} uncertain cases", cases.len());
    let mut outputs = Vec::new();
    let p = cfg.output_dir.join("explain/cases.csv");
    write_file(&p, &cases_csv(&cases))?;
    outputs.push(p);

    let models: Vec<MlpModel<f64>> = combined
        .runs
        .iter()
        .map(|r| {
            let path = cfg.output_dir.join(&r.model_file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(MlpModel::from_json(&text)?)
        })
        .collect::<Result<_, Error>>()?;
    let embedder = set.models[0].embedder()?;
    let explained_sel = parse_source(&source).map_err(Error::Pipeline)?[0];
    let tok = cfg.tokenizer.build();
    let row_of = |id: &str| art.ids.iter().position(|x| x == id).expect("test id is in the corpus");

    with_pool(cfg.bootstrap.workers, || -> Result<(), Error> {
        for &g in &e.granularities {
            let mut per_case = Vec::new();
            let mut jsonl = String::new();
            for case in &cases {
                let row = row_of(&case.id);
                let rec = &ds.records[row];
                let text = rec.text(explained_sel).ok_or_else(|| crate::corpus::CorpusError::MissingText(rec.id.clone()))?;
                let seg = segment(text, g, &tok)?;
                let fixed_prefix = art.structured.data.row(row).to_vec();
                let fixed_tail: Vec<f64> = set.blocks[1..].iter().flat_map(|b| b.features[row].values.clone()).collect();
                let score = |t: &str| {
                    let mut x = fixed_prefix.clone();
                    x.extend(embedder.embed(&tok.tokenize(t), row));
                    x.extend_from_slice(&fixed_tail);
                    models.iter().map(|m| m.predict_row(&x)).sum::<f64>() / models.len() as f64
                };
                let lcfg = LimeConfig {
                    n_samples: e.n_samples,
                    kernel_width: e.kernel_width,
                    ridge: e.ridge,
                    top_k: e.top_k,
                    seed: derive_seed(e.seed, &[row as u64]),
                };
                let attributions = lime_explain(score, &seg, &lcfg)?;
                jsonl.push_str(&serde_json::to_string(&CaseAttributions { id: &case.id, attributions: attributions.clone() }).expect("serializes"));
                jsonl.push('\n');
                per_case.push(attributions);
            }
            let name = match g {
                crate::explain::Granularity::Word => "word",
                crate::explain::Granularity::Phrase => "phrase",
            };
            let p = cfg.output_dir.join(format!("explain/attributions_{name}.jsonl"));
            write_file(&p, &jsonl)?;
            outputs.push(p);
            let csv = if per_case.is_empty() {
                String::from("rank,unit,mean_weight,case_count\n")
            } else {
                importance_csv(&aggregate_importance(&per_case, e.aggregate_top)?)?
            };
            let p = cfg.output_dir.join(format!("explain/importance_{name}.csv"));
            write_file(&p, &csv)?;
            outputs.push(p);
        }
        Ok(())
    })??;
    let p = cfg.output_dir.join("explain/settings.json");
    write_file(&p, &to_json(&serde_json::json!({ "featurizer": featurizer, "source": source, "cases": cases.len() })))?;
    outputs.push(p);
    write_manifest(cfg, "explain", &outputs)?;
    Ok(outputs)
}
