use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TextSelector;
use crate::eval::Metric;
use crate::explain::Granularity;
use crate::model::{MlpConfig, Optimizer};
use crate::refine::EndpointConfig;
use crate::synthgen::SynthConfig;
use crate::textfeat::{TokenMode, Tokenizer, DEFAULT_PUNCTUATION};
use crate::Error;

fn invalid(path: &str, detail: impl Into<String>) -> Error {
    Error::ConfigInvalid { path: path.into(), detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
    #[serde(default)]
    pub tabular: TabularConfig,
    #[serde(default)]
    pub text: TextConfig,
    #[serde(default)]
    pub model: ModelGrid,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub topk: TopkConfig,
    #[serde(default)]
    pub econ: EconSection,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub compare: CompareConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// JSON-lines corpus.
    pub corpus: PathBuf,
    /// Ordered feature schema.
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthPreset {
    Planted,
    Null,
    TextOnly,
    FullScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub preset: SynthPreset,
    pub n: usize,
    pub default_rate: f64,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { preset: SynthPreset::Planted, n: 2000, default_rate: 0.10, seed: 0 }
    }
}

impl SynthSection {
    pub fn build(&self) -> SynthConfig {
        match self.preset {
            SynthPreset::Planted => SynthConfig::planted(self.n, self.default_rate, self.seed),
            SynthPreset::Null => SynthConfig::null_signal(self.n, self.default_rate, self.seed),
            SynthPreset::TextOnly => SynthConfig::text_only(self.n, self.default_rate, self.seed),
            SynthPreset::FullScale => SynthConfig::full_scale(self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub val_frac_of_train: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_frac: 0.7, val_frac_of_train: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    pub mode: TokenMode,
    pub lowercase: bool,
    pub punctuation: String,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { mode: TokenMode::Word, lowercase: true, punctuation: DEFAULT_PUNCTUATION.into() }
    }
}

impl TokenizerConfig {
    pub fn build(&self) -> Tokenizer {
        Tokenizer { mode: self.mode, lowercase: self.lowercase, punctuation: self.punctuation.chars().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularConfig {
    pub n_bins: usize,
    pub smoothing: f64,
    pub iv_min: f64,
    pub iv_max: f64,
    pub vif_max: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self { n_bins: 10, smoothing: 0.5, iv_min: 0.01, iv_max: 0.5, vif_max: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaSection {
    /// Candidate topic counts, chosen by downstream validation loss.
    pub topics: Vec<usize>,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub infer_iterations: usize,
    pub seed: u64,
}

impl Default for LdaSection {
    fn default() -> Self {
        Self { topics: vec![5, 10, 15, 20, 25, 30], alpha: None, beta: 0.01, iterations: 500, infer_iterations: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordvecSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocvecSection {
    pub name: String,
    pub dim: usize,
    /// Sidecar file per text selector (`human`, `full`, ...).
    pub paths: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    /// Text sources; `a+b` concatenates the features of several texts.
    pub sources: Vec<String>,
    /// `lda`, `tfidf`, `wordvec` or `docvec:<name>`.
    pub featurizers: Vec<String>,
    pub lda: LdaSection,
    pub wordvec: Option<WordvecSection>,
    pub docvec: Vec<DocvecSection>,
    /// Token limit recorded as a truncation flag on document vectors.
    pub max_tokens: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            sources: vec!["human".into()],
            featurizers: vec!["lda".into()],
            lda: LdaSection::default(),
            wordvec: None,
            docvec: Vec::new(),
            max_tokens: crate::textfeat::MAX_ENCODER_TOKENS,
        }
    }
}

/// Parses `human+full` style source names.
pub fn parse_source(source: &str) -> Result<Vec<TextSelector>, String> {
    source.split('+').map(|s| s.trim().parse::<TextSelector>()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelGrid {
    pub hidden: Vec<Vec<usize>>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub optimizer: Optimizer,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for ModelGrid {
    fn default() -> Self {
        let d = MlpConfig::default();
        Self {
            hidden: vec![d.hidden],
            learning_rate: vec![d.learning_rate],
            batch_size: vec![d.batch_size],
            optimizer: d.optimizer,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

impl ModelGrid {
    /// Cartesian product in (hidden, learning rate, batch size) order.
    pub fn configs(&self, seed: u64) -> Vec<MlpConfig> {
        let mut out = Vec::new();
        for h in &self.hidden {
            for &lr in &self.learning_rate {
                for &b in &self.batch_size {
                    out.push(MlpConfig {
                        hidden: h.clone(),
                        learning_rate: lr,
                        batch_size: b,
                        optimizer: self.optimizer,
                        max_epochs: self.max_epochs,
                        patience: self.patience,
                        seed,
                        ..MlpConfig::default()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub model_seeds: Vec<u64>,
    pub resamples: usize,
    pub master_seed: u64,
    pub workers: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { model_seeds: vec![1, 2, 3, 4, 5], resamples: 1000, master_seed: 0, workers: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopkConfig {
    /// Rejection counts at the reference test-set size.
    pub k: Vec<usize>,
    /// Test-set size the `k` values refer to; they are rescaled to the
    /// actual test size.
    pub reference_test_size: usize,
}

impl Default for TopkConfig {
    fn default() -> Self {
        Self { k: vec![70, 100, 120, 150, 165], reference_test_size: 738 }
    }
}

impl TopkConfig {
    pub fn scaled(&self, test_size: usize) -> Vec<usize> {
        self.k
            .iter()
            .map(|&k| {
                let s = (k as f64 * test_size as f64 / self.reference_test_size as f64).round() as usize;
                s.clamp(1, test_size.max(1))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconSection {
    pub lgd: f64,
}

impl Default for EconSection {
    fn default() -> Self {
        Self { lgd: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    /// Featurizer and text source of the combined model to explain; default
    /// to the first configured ones.
    pub featurizer: Option<String>,
    pub text_source: Option<String>,
    pub band: (f64, f64),
    pub top_n: usize,
    pub n_samples: usize,
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub top_k: usize,
    pub aggregate_top: usize,
    pub granularities: Vec<Granularity>,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            featurizer: None,
            text_source: None,
            band: (0.40, 0.60),
            top_n: 250,
            n_samples: 1000,
            kernel_width: None,
            ridge: 1.0,
            top_k: 15,
            aggregate_top: 15,
            granularities: vec![Granularity::Word, Granularity::Phrase],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub endpoint: EndpointConfig,
    /// Relative paths resolve against `output_dir`.
    pub cache_dir: PathBuf,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self { endpoint: EndpointConfig::default(), cache_dir: PathBuf::from("refine_cache") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub dictionary: Option<PathBuf>,
    /// Bonferroni test count; defaults to the number of dictionary categories.
    pub m: Option<usize>,
    pub refined_source: String,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { dictionary: None, m: None, refined_source: "full".into() }
    }
}

impl PipelineConfig {
    /// A config around an existing corpus with every other setting at its default.
    pub fn with_data(corpus: PathBuf, schema: PathBuf, output_dir: PathBuf) -> Self {
        Self {
            data: DataConfig { corpus, schema },
            output_dir,
            synth: SynthSection::default(),
            split: SplitConfig::default(),
            tokenizer: TokenizerConfig::default(),
            tabular: TabularConfig::default(),
            text: TextConfig::default(),
            model: ModelGrid::default(),
            bootstrap: BootstrapConfig::default(),
            metrics: default_metrics(),
            topk: TopkConfig::default(),
            econ: EconSection::default(),
            explain: ExplainConfig::default(),
            refine: RefineSection::default(),
            compare: CompareConfig::default(),
        }
    }

    /// Parses TOML; relative data paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), detail: e.to_string() })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| {
            let span = e
                .span()
                .map(|s| {
                    let line_no = text[..s.start].matches('\n').count() + 1;
                    let line = text.lines().nth(line_no - 1).unwrap_or("").trim();
                    format!(" at line {line_no} ({line})")
                })
                .unwrap_or_default();
            invalid("<root>", format!("{}{span}", e.message()))
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.corpus);
        fix(&mut self.data.schema);
        fix(&mut self.output_dir);
        if let Some(w) = &mut self.text.wordvec {
            fix(&mut w.path);
        }
        for d in &mut self.text.docvec {
            d.paths.values_mut().for_each(fix);
        }
        if let Some(d) = &mut self.compare.dictionary {
            fix(d);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering. The worker count does not
    /// change any result, so it is left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.bootstrap.workers = 0;
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    pub fn cache_dir(&self) -> PathBuf {
        if self.refine.cache_dir.is_absolute() {
            self.refine.cache_dir.clone()
        } else {
            self.output_dir.join(&self.refine.cache_dir)
        }
    }

    /// Structural checks; `need_data` additionally requires the corpus files.
    pub fn validate(&self, need_data: bool) -> Result<(), Error> {
        if need_data {
            for (key, p) in [("data.corpus", &self.data.corpus), ("data.schema", &self.data.schema)] {
                if !p.exists() {
                    return Err(invalid(key, format!("{} does not exist", p.display())));
                }
            }
        }
        let s = &self.split;
        if !(s.train_frac > 0.0 && s.train_frac < 1.0) {
            return Err(invalid("split.train_frac", "must lie in (0, 1)"));
        }
        if !(s.val_frac_of_train > 0.0 && s.val_frac_of_train < 1.0) {
            return Err(invalid("split.val_frac_of_train", "must lie in (0, 1)"));
        }
        let t = &self.tabular;
        if t.n_bins < 2 {
            return Err(invalid("tabular.n_bins", "must be at least 2"));
        }
        if t.smoothing < 0.0 {
            return Err(invalid("tabular.smoothing", "must be non-negative"));
        }
        if t.iv_min >= t.iv_max {
            return Err(invalid("tabular.iv_min", "must be below tabular.iv_max"));
        }
        for (i, src) in self.text.sources.iter().enumerate() {
            parse_source(src).map_err(|e| invalid(&format!("text.sources[{i}]"), e))?;
        }
        for (i, f) in self.text.featurizers.iter().enumerate() {
            let key = format!("text.featurizers[{i}]");
            match f.as_str() {
                "lda" => {
                    if self.text.lda.topics.is_empty() || self.text.lda.topics.contains(&0) {
                        return Err(invalid("text.lda.topics", "needs positive topic counts"));
                    }
                }
                "tfidf" => {}
                "wordvec" => {
                    let w = self.text.wordvec.as_ref().ok_or_else(|| invalid("text.wordvec.path", "required by the wordvec featurizer"))?;
                    if need_data && !w.path.exists() {
                        return Err(invalid("text.wordvec.path", format!("{} does not exist", w.path.display())));
                    }
                }
                other => {
                    let name = other.strip_prefix("docvec:").ok_or_else(|| invalid(&key, format!("unknown featurizer {other:?}")))?;
                    let (di, d) = self
                        .text
                        .docvec
                        .iter()
                        .enumerate()
                        .find(|(_, d)| d.name == name)
                        .ok_or_else(|| invalid(&key, format!("no [[text.docvec]] entry named {name:?}")))?;
                    for src in &self.text.sources {
                        for sel in parse_source(src).unwrap() {
                            let p = d.paths.get(sel.as_str()).ok_or_else(|| {
                                invalid(&format!("text.docvec[{di}].paths.{}", sel.as_str()), "missing sidecar path")
                            })?;
                            if need_data && !p.exists() {
                                return Err(invalid(
                                    &format!("text.docvec[{di}].paths.{}", sel.as_str()),
                                    format!("{} does not exist", p.display()),
                                ));
                            }
                        }
                    }
                }
            }
        }
        let m = &self.model;
        if m.hidden.is_empty() || m.learning_rate.is_empty() || m.batch_size.is_empty() {
            return Err(invalid("model", "grid lists must be non-empty"));
        }
        for (i, c) in m.configs(0).iter().enumerate() {
            c.validate().map_err(|e| invalid(&format!("model[{i}]"), e.to_string()))?;
        }
        let b = &self.bootstrap;
        if b.model_seeds.is_empty() {
            return Err(invalid("bootstrap.model_seeds", "must list at least one seed"));
        }
        if b.resamples == 0 {
            return Err(invalid("bootstrap.resamples", "must be positive"));
        }
        if b.workers == 0 {
            return Err(invalid("bootstrap.workers", "must be positive"));
        }
        if self.metrics.is_empty() {
            return Err(invalid("metrics", "must list at least one metric"));
        }
        if self.topk.reference_test_size == 0 || self.topk.k.contains(&0) {
            return Err(invalid("topk", "k values and reference_test_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.econ.lgd) {
            return Err(invalid("econ.lgd", "must lie in [0, 1]"));
        }
        let e = &self.explain;
        if !(e.band.0 <= e.band.1) {
            return Err(invalid("explain.band", "lower bound exceeds upper bound"));
        }
        if e.n_samples < 2 {
            return Err(invalid("explain.n_samples", "must be at least 2"));
        }
        self.refine.endpoint.validate().map_err(|e| invalid("refine.endpoint", e.to_string()))?;
        if need_data {
            if let Some(d) = &self.compare.dictionary {
                if !d.exists() {
                    return Err(invalid("compare.dictionary", format!("{} does not exist", d.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\ncorpus = \"c.jsonl\"\nschema = \"s.json\"\n";

    #[test]
    fn defaults_fill_in() {
        let c = PipelineConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.split.train_frac, 0.7);
        assert_eq!(c.bootstrap.model_seeds.len(), 5);
        assert_eq!(c.metrics, Metric::ALL.to_vec());
        assert!(c.validate(false).is_ok());
        assert_eq!(PipelineConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_fail() {
        let err = PipelineConfig::parse(&format!("{MINIMAL}[split]\ntrain_fraction = 0.5\n")).unwrap_err();
        assert!(err.to_string().contains("train_fraction"), "{err}");
    }

    #[test]
    fn validation_names_field() {
        let mut c = PipelineConfig::parse(MINIMAL).unwrap();
        c.text.featurizers = vec!["docvec:ada".into()];
        let err = c.validate(false).unwrap_err().to_string();
        assert!(err.contains("text.featurizers[0]"), "{err}");
        c.text.docvec.push(DocvecSection { name: "ada".into(), dim: 4, paths: BTreeMap::new() });
        let err = c.validate(false).unwrap_err().to_string();
        assert!(err.contains("text.docvec[0].paths.human"), "{err}");
        assert!(matches!(c.validate(true), Err(Error::ConfigInvalid { .. })));
    }

    #[test]
    fn topk_scaling() {
        let t = TopkConfig::default();
        assert_eq!(t.scaled(738), vec![70, 100, 120, 150, 165]);
        assert_eq!(t.scaled(600), vec![57, 81, 98, 122, 134]);
    }

    #[test]
    fn source_parsing() {
        assert_eq!(parse_source("human+full").unwrap().len(), 2);
        assert!(parse_source("humane").is_err());
    }
}
