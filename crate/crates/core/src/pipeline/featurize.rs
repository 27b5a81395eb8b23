use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_data, parse_source, texts_of, to_json, with_pool, write_file, write_manifest, PipelineConfig, FEATURES_FILE};
use crate::corpus::{stratified_split, Dataset, SplitIndices, TextSelector};
use crate::model::{assemble, train, TextBlock, Variant};
use crate::rng::derive_seed;
use crate::tabular::{encode, fit_binning, fit_woe, impute, select_by_iv, vif_filter, EncodedMatrix};
use crate::textfeat::{
    avg_embed, fit_lda, fit_tfidf, infer_topics, load_doc_vectors, load_word_vectors, DocFeatures, FeatureSource,
    LdaConfig, LdaModel, TfidfModel, Tokenizer, WordVectors,
};
use crate::Error;

/// A fitted text featurizer for one text selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedFeaturizer {
    Lda {
        model: LdaModel,
        infer_iterations: usize,
        /// Base of the per-record inference seeds.
        seed: u64,
    },
    Tfidf {
        model: TfidfModel,
    },
    Wordvec {
        path: PathBuf,
    },
    /// Precomputed vectors; cannot be applied to new text.
    Docvec {
        name: String,
    },
}

/// Loaded form of a featurizer that can embed arbitrary text.
pub(crate) enum Embedder<'a> {
    Lda { model: &'a LdaModel, iterations: usize, seed: u64 },
    Tfidf(&'a TfidfModel),
    Wordvec(WordVectors),
}

impl FittedFeaturizer {
    pub(crate) fn embedder(&self) -> Result<Embedder<'_>, Error> {
        Ok(match self {
            FittedFeaturizer::Lda { model, infer_iterations, seed } => {
                Embedder::Lda { model, iterations: *infer_iterations, seed: *seed }
            }
            FittedFeaturizer::Tfidf { model } => Embedder::Tfidf(model),
            FittedFeaturizer::Wordvec { path } => Embedder::Wordvec(load_word_vectors(path)?),
            FittedFeaturizer::Docvec { name } => {
                return Err(Error::Pipeline(format!(
                    "docvec:{name} vectors are precomputed and cannot embed perturbed text"
                )))
            }
        })
    }
}

impl Embedder<'_> {
    /// Embeds the tokens of the record at position `row` of the corpus.
    pub(crate) fn embed(&self, tokens: &[String], row: usize) -> Vec<f64> {
        match self {
            Embedder::Lda { model, iterations, seed } => {
                infer_topics(model, tokens, *iterations, derive_seed(*seed, &[row as u64]))
            }
            Embedder::Tfidf(m) => m.transform_dense(tokens),
            Embedder::Wordvec(v) => avg_embed(v, tokens),
        }
    }
}

/// Text features of one (featurizer, source) pair: one block and one fitted
/// featurizer per text selector of the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextFeatureSet {
    pub featurizer: String,
    pub source: String,
    pub blocks: Vec<TextBlock>,
    pub models: Vec<FittedFeaturizer>,
    /// LDA only: (topic count, validation loss) of each candidate tried;
    /// no loss is computed when there is a single candidate.
    #[serde(default)]
    pub topic_search: Vec<(usize, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureArtifact {
    pub config_hash: String,
    pub split: SplitIndices,
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub information_values: BTreeMap<String, f64>,
    pub iv_selected: Vec<String>,
    /// WoE-encoded columns surviving the IV and VIF screens, every record.
    pub structured: EncodedMatrix<f64>,
    pub text: Vec<TextFeatureSet>,
}

impl FeatureArtifact {
    pub fn labels_f64(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| f64::from(self.labels[i])).collect()
    }

    pub fn text_set(&self, featurizer: &str, source: &str) -> Option<&TextFeatureSet> {
        self.text.iter().find(|t| t.featurizer == featurizer && t.source == source)
    }
}

fn structured_features(cfg: &PipelineConfig, ds: &Dataset, split: &SplitIndices) -> Result<(BTreeMap<String, f64>, Vec<String>, EncodedMatrix<f64>), Error> {
    let t = &cfg.tabular;
    let imputed = impute(ds, &split.train)?;
    let binning = fit_binning(&imputed, &split.train, t.n_bins)?;
    let table = fit_woe(&imputed, &split.train, &binning, t.smoothing)?;
    let ivs: BTreeMap<String, f64> = table.features.iter().map(|(k, f)| (k.clone(), f.iv)).collect();
    let selected = select_by_iv(&ivs, ds.schema.names(), t.iv_min, t.iv_max);
    let encoded = encode(&imputed, &table, &selected)?;
    let kept = vif_filter(&encoded.select_rows(&split.train), t.vif_max)?;
    if kept.is_empty() {
        log::warn!("no structured feature passes the IV screen; the structured model is intercept-only");
    }
    let structured = encoded.select_columns(&kept).expect("kept columns come from the matrix");
    Ok((ivs, selected, structured))
}

/// Token lists of `sel` for every record.
fn tokens_of(ds: &Dataset, sel: TextSelector, tok: &Tokenizer) -> Result<Vec<Vec<String>>, Error> {
    Ok(texts_of(ds, sel)?.into_par_iter().map(|t| tok.tokenize(t)).collect())
}

fn block(name: String, source: FeatureSource, ids: &[String], values: Vec<Vec<f64>>, tokens: &[Vec<String>], max_tokens: usize) -> TextBlock {
    let features = ids
        .iter()
        .zip(values)
        .zip(tokens)
        .map(|((id, values), t)| DocFeatures { id: id.clone(), source: source.clone(), values, truncated: t.len() > max_tokens })
        .collect();
    TextBlock { name, features }
}

fn lda_block(cfg: &PipelineConfig, topics: usize, sel: TextSelector, tokens: &[Vec<String>], ids: &[String], train_rows: &[usize]) -> Result<(TextBlock, FittedFeaturizer), Error> {
    let l = &cfg.text.lda;
    let lcfg = LdaConfig {
        n_topics: topics,
        alpha: l.alpha,
        beta: l.beta,
        iterations: l.iterations,
        infer_iterations: l.infer_iterations,
        seed: derive_seed(l.seed, &[topics as u64]),
    };
    let docs: Vec<&Vec<String>> = train_rows.iter().map(|&i| &tokens[i]).collect();
    let docs: Vec<Vec<String>> = docs.into_iter().cloned().collect();
    let model = fit_lda(&docs, &lcfg)?;
    let fitted = FittedFeaturizer::Lda { model, infer_iterations: l.infer_iterations, seed: lcfg.seed };
    let emb = fitted.embedder()?;
    let values: Vec<Vec<f64>> = tokens.par_iter().enumerate().map(|(i, t)| emb.embed(t, i)).collect();
    let name = format!("lda:{}", sel.as_str());
    Ok((block(name, FeatureSource::Lda, ids, values, tokens, cfg.text.max_tokens), fitted))
}

/// Validation loss of a text-only network on `blocks`, with the first grid
/// configuration and the first model seed.
fn text_val_loss(cfg: &PipelineConfig, art: &FeatureArtifact, blocks: &[TextBlock]) -> Result<f64, Error> {
    let x = assemble(Variant::Text, None, blocks)?;
    let s = &art.split;
    let mcfg = cfg.model.configs(cfg.bootstrap.model_seeds[0]).swap_remove(0);
    let (_, rep) = train(&x.select_rows(&s.train), &art.labels_f64(&s.train), &x.select_rows(&s.val), &art.labels_f64(&s.val), &mcfg)?;
    Ok(rep.best_val_loss)
}

fn featurize_set(
    cfg: &PipelineConfig,
    art: &FeatureArtifact,
    featurizer: &str,
    source: &str,
    tokens: &BTreeMap<TextSelector, Vec<Vec<String>>>,
    wordvecs: &mut Option<WordVectors>,
) -> Result<TextFeatureSet, Error> {
    let sels = parse_source(source).map_err(Error::Pipeline)?;
    let ids = &art.ids;
    let train_rows = &art.split.train;
    let mut set = TextFeatureSet { featurizer: featurizer.into(), source: source.into(), blocks: vec![], models: vec![], topic_search: vec![] };
    match featurizer {
        "lda" => {
            let candidates = &cfg.text.lda.topics;
            let mut best: Option<(Option<f64>, Vec<TextBlock>, Vec<FittedFeaturizer>)> = None;
            for &k in candidates {
                let mut blocks = Vec::new();
                let mut models = Vec::new();
                for &sel in &sels {
                    let (b, m) = lda_block(cfg, k, sel, &tokens[&sel], ids, train_rows)?;
                    blocks.push(b);
                    models.push(m);
                }
                let loss = if candidates.len() > 1 { Some(text_val_loss(cfg, art, &blocks)?) } else { None };
                if let Some(l) = loss {
                    log::info!("lda {source}: {k} topics, validation loss {l:.6}");
                }
                set.topic_search.push((k, loss));
                if best.as_ref().is_none_or(|(l, _, _)| loss < *l) {
                    best = Some((loss, blocks, models));
                }
            }
            let (_, blocks, models) = best.expect("at least one topic count");
            set.blocks = blocks;
            set.models = models;
        }
        "tfidf" => {
            for &sel in &sels {
                let t = &tokens[&sel];
                let train_docs: Vec<Vec<String>> = train_rows.iter().map(|&i| t[i].clone()).collect();
                let model = fit_tfidf(&train_docs)?;
                let values: Vec<Vec<f64>> = t.par_iter().map(|d| model.transform_dense(d)).collect();
                set.blocks.push(block(format!("tfidf:{}", sel.as_str()), FeatureSource::Tfidf, ids, values, t, cfg.text.max_tokens));
                set.models.push(FittedFeaturizer::Tfidf { model });
            }
        }
        "wordvec" => {
            let path = cfg.text.wordvec.as_ref().expect("validated").path.clone();
            if wordvecs.is_none() {
                *wordvecs = Some(load_word_vectors(&path)?);
            }
            let wv = wordvecs.as_ref().unwrap();
            for &sel in &sels {
                let t = &tokens[&sel];
                let values: Vec<Vec<f64>> = t.par_iter().map(|d| avg_embed(wv, d)).collect();
                set.blocks.push(block(format!("wordvec:{}", sel.as_str()), FeatureSource::Wordvec, ids, values, t, cfg.text.max_tokens));
                set.models.push(FittedFeaturizer::Wordvec { path: path.clone() });
            }
        }
        other => {
            let name = other.strip_prefix("docvec:").expect("validated");
            let d = cfg.text.docvec.iter().find(|d| d.name == name).expect("validated");
            for &sel in &sels {
                let vecs = load_doc_vectors(&d.paths[sel.as_str()], d.dim, ids)?;
                let values: Vec<Vec<f64>> = ids.iter().map(|id| vecs[id].clone()).collect();
                let src = FeatureSource::Docvec(name.into());
                set.blocks.push(block(format!("docvec-{name}:{}", sel.as_str()), src, ids, values, &tokens[&sel], cfg.text.max_tokens));
                set.models.push(FittedFeaturizer::Docvec { name: name.into() });
            }
        }
    }
    Ok(set)
}

/// Splits the corpus, encodes the structured features and fits every
/// configured text featurizer on the training rows. Writes `features.json`.
pub fn run_featurize(cfg: &PipelineConfig) -> Result<FeatureArtifact, Error> {
    cfg.validate(true)?;
    let ds = load_data(cfg)?;
    with_pool(cfg.bootstrap.workers, || featurize(cfg, &ds))?
}

fn featurize(cfg: &PipelineConfig, ds: &Dataset) -> Result<FeatureArtifact, Error> {
    let s = &cfg.split;
    let split = stratified_split(ds, s.train_frac, s.val_frac_of_train, s.seed)?;
    log::info!("split: {} train, {} validation, {} test", split.train.len(), split.val.len(), split.test.len());
    let (information_values, iv_selected, structured) = structured_features(cfg, ds, &split)?;
    let mut art = FeatureArtifact {
        config_hash: cfg.hash(),
        ids: ds.ids(),
        labels: ds.labels(),
        split,
        information_values,
        iv_selected,
        structured,
        text: Vec::new(),
    };

    let tok = cfg.tokenizer.build();
    let mut tokens = BTreeMap::new();
    for src in &cfg.text.sources {
        for sel in parse_source(src).map_err(Error::Pipeline)? {
            if let std::collections::btree_map::Entry::Vacant(slot) = tokens.entry(sel) {
                slot.insert(tokens_of(ds, sel, &tok)?);
            }
        }
    }
    let mut wordvecs = None;
    for f in &cfg.text.featurizers {
        for src in &cfg.text.sources {
            let set = featurize_set(cfg, &art, f, src, &tokens, &mut wordvecs)?;
            art.text.push(set);
        }
    }
    let path = cfg.output_dir.join(FEATURES_FILE);
    write_file(&path, &to_json(&art))?;
    write_manifest(cfg, "featurize", &[path])?;
    Ok(art)
}
