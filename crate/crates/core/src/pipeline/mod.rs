//! Stage orchestration over one [`PipelineConfig`]. Each stage reads the
//! artifacts of the previous ones from the output directory and writes its
//! own; nothing in a report depends on wall-clock time or worker count.

mod compare;
mod config;
mod explain;
mod featurize;
mod report;
mod train;

pub use compare::{run_compare, CompareReport};
pub use config::*;
pub use explain::run_explain;
pub use featurize::{run_featurize, FeatureArtifact, FittedFeaturizer, TextFeatureSet};
pub use report::{run_evaluate, run_profit, EvalReport, ReportRow};
pub use train::{run_train, PredictionArtifact, SeedRun, TrainedRow};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_dataset, Dataset, Schema, TextSelector, VariantTag};
use crate::model::Variant;
use crate::refine::{compose_variant, refine_batch, LlmClient, RefineError, ResponseCache, Sections};
use crate::synthgen;
use crate::Error;

pub const FEATURES_FILE: &str = "features.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Command-line restrictions applied on top of the config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub variant: Option<Variant>,
    pub text_source: Option<String>,
    /// Explicit top-k cutoff at the actual test size, replacing the scaled list.
    pub k: Option<usize>,
}

impl Selection {
    pub fn wants_variant(&self, v: Variant) -> bool {
        self.variant.is_none_or(|x| x == v)
    }

    pub fn wants_source(&self, s: &str) -> bool {
        self.text_source.as_deref().is_none_or(|x| x == s)
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::io(path, e))
}

pub fn load_data(cfg: &PipelineConfig) -> Result<Dataset, Error> {
    let schema = Schema::load(&cfg.data.schema)?;
    Ok(load_dataset(&cfg.data.corpus, &schema)?)
}

/// File-name-safe key of a trained row.
pub(crate) fn row_key(variant: Variant, featurizer: Option<&str>, source: Option<&str>) -> String {
    let mut k = variant.as_str().to_string();
    for part in [featurizer, source].into_iter().flatten() {
        k.push('_');
        k.extend(part.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' }));
    }
    k
}

/// Runs `f` on a pool of `workers` threads.
pub(crate) fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Pipeline(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub package_version: String,
    pub config_hash: String,
    pub split_seed: u64,
    pub lda_seed: u64,
    pub model_seeds: Vec<u64>,
    pub bootstrap_master_seed: u64,
    pub explain_seed: u64,
    pub synth_seed: u64,
    /// Output files of the stage with their SHA-256 digests.
    pub outputs: BTreeMap<String, String>,
}

/// Writes `manifest.json` for `stage`, hashing the listed outputs.
pub(crate) fn write_manifest(cfg: &PipelineConfig, stage: &str, outputs: &[PathBuf]) -> Result<(), Error> {
    use sha2::{Digest, Sha256};
    let mut digests = BTreeMap::new();
    for p in outputs {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let rel = p.strip_prefix(&cfg.output_dir).unwrap_or(p).display().to_string();
        digests.insert(rel, hex::encode(Sha256::digest(&bytes)));
    }
    let m = Manifest {
        stage: stage.into(),
        package_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        split_seed: cfg.split.seed,
        lda_seed: cfg.text.lda.seed,
        model_seeds: cfg.bootstrap.model_seeds.clone(),
        bootstrap_master_seed: cfg.bootstrap.master_seed,
        explain_seed: cfg.explain.seed,
        synth_seed: cfg.synth.seed,
        outputs: digests,
    };
    let name = format!("manifest_{stage}.json");
    write_file(&cfg.output_dir.join(&name), &to_json(&m))?;
    write_file(&cfg.output_dir.join(MANIFEST_FILE), &to_json(&m))
}

/// Generates the synthetic corpus at the configured data paths, with the
/// ground-truth sidecar next to the corpus.
pub fn run_synth(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, Error> {
    let scfg = cfg.synth.build();
    let (ds, truth) = synthgen::generate(&scfg)?;
    let truth_path = cfg.data.corpus.with_file_name("truth.json");
    write_file(&cfg.data.corpus, &ds.to_jsonl())?;
    write_file(&cfg.data.schema, &to_json(&ds.schema))?;
    write_file(&truth_path, &truth.to_json())?;
    log::info!("wrote {} records ({} defaults) to {}", ds.len(), ds.labels().iter().filter(|&&l| l == 1).count(), cfg.data.corpus.display());
    let outputs = vec![cfg.data.corpus.clone(), cfg.data.schema.clone(), truth_path];
    write_manifest(cfg, "synth", &outputs)?;
    Ok(outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineSummary {
    pub records: usize,
    pub refined: usize,
    pub from_cache: usize,
    /// Records whose response did not follow the answer template; they keep
    /// only the raw response as their `full` text.
    pub format_mismatch: Vec<String>,
}

/// Fills `refined_texts` from the chat endpoint and writes
/// `corpus_refined.jsonl` in the output directory.
pub fn run_refine(cfg: &PipelineConfig) -> Result<RefineSummary, Error> {
    let client = LlmClient::from_env(cfg.refine.endpoint.clone())?;
    run_refine_with(cfg, &client)
}

pub fn run_refine_with(cfg: &PipelineConfig, client: &LlmClient) -> Result<RefineSummary, Error> {
    let mut ds = load_data(cfg)?;
    let cache = ResponseCache::open(&cfg.cache_dir())?;
    let items: Vec<(String, String)> = ds.records.iter().map(|r| (r.id.clone(), r.human_text.clone())).collect();
    let results = refine_batch(&cache, client, &items);
    let mut summary = RefineSummary { records: ds.len(), refined: 0, from_cache: 0, format_mismatch: Vec::new() };
    for (rec, res) in ds.records.iter_mut().zip(results) {
        match res {
            Ok(r) => {
                summary.refined += 1;
                summary.from_cache += usize::from(r.retrieved_from_cache);
                let sections = Sections { positive: r.positive, negative: r.negative };
                rec.refined_texts.clear();
                rec.refined_texts.insert(VariantTag::Full, r.raw.trim().to_string());
                for tag in VariantTag::ALL.into_iter().filter(|t| *t != VariantTag::Full) {
                    match compose_variant(&sections, tag) {
                        Ok(text) => {
                            rec.refined_texts.insert(tag, text);
                        }
                        Err(e) => log::warn!("record {}: {e}", rec.id),
                    }
                }
            }
            Err(RefineError::FormatMismatch { raw }) => {
                log::warn!("record {}: response does not follow the answer template", rec.id);
                rec.refined_texts.clear();
                rec.refined_texts.insert(VariantTag::Full, raw.trim().to_string());
                summary.format_mismatch.push(rec.id.clone());
            }
            Err(e) => return Err(Error::Pipeline(format!("record {}: refine: {e}", rec.id))),
        }
    }
    let out = cfg.output_dir.join("corpus_refined.jsonl");
    write_file(&out, &ds.to_jsonl())?;
    let summary_path = cfg.output_dir.join("refine_summary.json");
    write_file(&summary_path, &to_json(&summary))?;
    write_manifest(cfg, "refine", &[out, summary_path])?;
    Ok(summary)
}

/// Text of `sel` for every record, failing on the first record without it.
pub(crate) fn texts_of(ds: &Dataset, sel: TextSelector) -> Result<Vec<&str>, Error> {
    ds.records
        .iter()
        .map(|r| r.text(sel).ok_or_else(|| crate::corpus::CorpusError::MissingText(r.id.clone()).into()))
        .collect()
}
