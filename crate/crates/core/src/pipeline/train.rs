use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_json, row_key, to_json, with_pool, write_file, write_manifest, FeatureArtifact, PipelineConfig, Selection, FEATURES_FILE, PREDICTIONS_FILE};
use crate::model::{assemble, grid_search, predict_proba, train, MlpConfig, MlpModel, TextBlock, Variant};
use crate::tabular::EncodedMatrix;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Default probabilities on the test rows, in test order.
    pub test_scores: Vec<f64>,
    /// Model file relative to the output directory.
    pub model_file: String,
}

/// One trained (variant, featurizer, source) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRow {
    pub variant: Variant,
    pub featurizer: Option<String>,
    pub source: Option<String>,
    /// Position of the chosen configuration in the grid.
    pub grid_index: usize,
    pub grid_val_losses: Vec<Option<f64>>,
    pub config: MlpConfig,
    pub runs: Vec<SeedRun>,
}

impl TrainedRow {
    pub fn key(&self) -> String {
        row_key(self.variant, self.featurizer.as_deref(), self.source.as_deref())
    }

    /// Test probability averaged over the model seeds.
    pub fn mean_scores(&self) -> Vec<f64> {
        let n = self.runs.len() as f64;
        let mut out = vec![0.0; self.runs[0].test_scores.len()];
        for r in &self.runs {
            out.iter_mut().zip(&r.test_scores).for_each(|(o, s)| *o += s);
        }
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionArtifact {
    pub config_hash: String,
    pub test_ids: Vec<String>,
    pub test_labels: Vec<u8>,
    pub model_seeds: Vec<u64>,
    pub rows: Vec<TrainedRow>,
}

impl PredictionArtifact {
    pub fn find(&self, variant: Variant, featurizer: Option<&str>, source: Option<&str>) -> Option<&TrainedRow> {
        self.rows.iter().find(|r| {
            r.variant == variant
                && (variant == Variant::Structured
                    || (r.featurizer.as_deref() == featurizer && r.source.as_deref() == source))
        })
    }
}

struct Job<'a> {
    variant: Variant,
    featurizer: Option<&'a str>,
    source: Option<&'a str>,
    blocks: &'a [TextBlock],
}

fn fit_row(cfg: &PipelineConfig, art: &FeatureArtifact, job: &Job<'_>) -> Result<(TrainedRow, Vec<(String, String)>), Error> {
    let structured = matches!(job.variant, Variant::Structured | Variant::Combined).then_some(&art.structured);
    let x: EncodedMatrix<f64> = assemble(job.variant, structured, job.blocks)?;
    let s = &art.split;
    let (xtr, ytr) = (x.select_rows(&s.train), art.labels_f64(&s.train));
    let (xva, yva) = (x.select_rows(&s.val), art.labels_f64(&s.val));
    let xte = x.select_rows(&s.test);
    let seeds = &cfg.bootstrap.model_seeds;

    let grid = grid_search(&cfg.model.configs(seeds[0]), &xtr, &ytr, &xva, &yva)?;
    let key = row_key(job.variant, job.featurizer, job.source);
    log::info!("{key}: grid choice {} of {}", grid.best_index + 1, grid.reports.len());
    let fits: Vec<Result<(MlpModel<f64>, crate::model::TrainReport), Error>> = seeds
        .par_iter()
        .map(|&seed| {
            let c = MlpConfig { seed, ..grid.best_config.clone() };
            Ok(train(&xtr, &ytr, &xva, &yva, &c)?)
        })
        .collect();
    let mut runs = Vec::new();
    let mut files = Vec::new();
    for (&seed, fit) in seeds.iter().zip(fits) {
        let (model, rep) = fit?;
        let model_file = format!("models/{key}_seed{seed}.json");
        files.push((model_file.clone(), model.to_json()));
        runs.push(SeedRun {
            seed,
            best_epoch: rep.best_epoch,
            best_val_loss: rep.best_val_loss,
            test_scores: predict_proba(&model, &xte)?,
            model_file,
        });
    }
    let row = TrainedRow {
        variant: job.variant,
        featurizer: job.featurizer.map(str::to_string),
        source: job.source.map(str::to_string),
        grid_index: grid.best_index,
        grid_val_losses: grid.reports.iter().map(|r| r.as_ref().ok().map(|r| r.best_val_loss)).collect(),
        config: MlpConfig { seed: 0, ..grid.best_config },
        runs,
    };
    Ok((row, files))
}

/// Grid-searches each variant once (first model seed), then retrains the
/// chosen configuration under every model seed. Writes `predictions.json`
/// and one model file per seed.
pub fn run_train(cfg: &PipelineConfig, sel: &Selection) -> Result<PredictionArtifact, Error> {
    cfg.validate(false)?;
    let art: FeatureArtifact = read_json(&cfg.output_dir.join(FEATURES_FILE))?;
    if art.config_hash != cfg.hash() {
        log::warn!("features.json was produced under a different config");
    }
    with_pool(cfg.bootstrap.workers, || train_all(cfg, &art, sel))?
}

fn train_all(cfg: &PipelineConfig, art: &FeatureArtifact, sel: &Selection) -> Result<PredictionArtifact, Error> {
    let mut jobs = Vec::new();
    if sel.wants_variant(Variant::Structured) {
        jobs.push(Job { variant: Variant::Structured, featurizer: None, source: None, blocks: &[] });
    }
    for set in &art.text {
        if !sel.wants_source(&set.source) {
            continue;
        }
        for v in [Variant::Text, Variant::Combined] {
            if sel.wants_variant(v) {
                jobs.push(Job { variant: v, featurizer: Some(&set.featurizer), source: Some(&set.source), blocks: &set.blocks });
            }
        }
    }
    if jobs.is_empty() {
        return Err(Error::Pipeline("the variant and text-source selection matches nothing".into()));
    }
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for job in &jobs {
        let (row, files) = fit_row(cfg, art, job)?;
        for (name, body) in files {
            let p = cfg.output_dir.join(name);
            write_file(&p, &body)?;
            outputs.push(p);
        }
        rows.push(row);
    }
    let test = &art.split.test;
    let pred = PredictionArtifact {
        config_hash: cfg.hash(),
        test_ids: test.iter().map(|&i| art.ids[i].clone()).collect(),
        test_labels: test.iter().map(|&i| art.labels[i]).collect(),
        model_seeds: cfg.bootstrap.model_seeds.clone(),
        rows,
    };
    let path = cfg.output_dir.join(PREDICTIONS_FILE);
    write_file(&path, &to_json(&pred))?;
    outputs.push(path);
    write_manifest(cfg, "train", &outputs)?;
    Ok(pred)
}
