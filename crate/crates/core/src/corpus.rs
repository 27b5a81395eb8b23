//! Loan records, JSON-lines ingestion, stratified splitting and text length
//! statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::rng;
use crate::textfeat::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: schema mismatch: {detail}")]
    SchemaMismatch { line: usize, detail: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: invalid label {value}")]
    InvalidLabel { line: usize, value: String },
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("record {0:?} has no text for the selected source")]
    MissingText(String),
    #[error("invalid schema file: {0}")]
    BadSchema(String),
}

type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Continuous(f64),
    Categorical(String),
    Missing,
}

impl FeatureValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }

    fn to_json(&self) -> Value {
        match self {
            FeatureValue::Continuous(v) => serde_json::json!(v),
            FeatureValue::Categorical(s) => Value::String(s.clone()),
            FeatureValue::Missing => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema(pub Vec<FeatureSpec>);

impl Schema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| CorpusError::BadSchema(e.to_string()))
    }

    pub fn kind_of(&self, name: &str) -> Option<FeatureKind> {
        self.0.iter().find(|f| f.name == name).map(|f| f.kind)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|f| f.name.as_str())
    }
}

/// Tags of the refined-text variants a record may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantTag {
    Full,
    Positive,
    Negative,
    PosNeg,
    NegPos,
}

impl VariantTag {
    pub const ALL: [VariantTag; 5] = [
        VariantTag::Full,
        VariantTag::Positive,
        VariantTag::Negative,
        VariantTag::PosNeg,
        VariantTag::NegPos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantTag::Full => "full",
            VariantTag::Positive => "positive",
            VariantTag::Negative => "negative",
            VariantTag::PosNeg => "pos_neg",
            VariantTag::NegPos => "neg_pos",
        }
    }
}

impl fmt::Display for VariantTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantTag {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        VariantTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown refined-text tag {s:?}"))
    }
}

/// Which text of a record to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSelector {
    Human,
    Refined(VariantTag),
}

impl TextSelector {
    pub fn as_str(self) -> &'static str {
        match self {
            TextSelector::Human => "human",
            TextSelector::Refined(t) => t.as_str(),
        }
    }
}

impl FromStr for TextSelector {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "human" {
            Ok(TextSelector::Human)
        } else {
            s.parse().map(TextSelector::Refined)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoanRecord {
    pub id: String,
    pub features: BTreeMap<String, FeatureValue>,
    pub human_text: String,
    pub refined_texts: BTreeMap<VariantTag, String>,
    pub label: u8,
    pub loan_amount: f64,
    pub interest_rate: f64,
    pub term_months: u32,
}

impl LoanRecord {
    pub fn text(&self, sel: TextSelector) -> Option<&str> {
        match sel {
            TextSelector::Human => Some(self.human_text.as_str()),
            TextSelector::Refined(tag) => self.refined_texts.get(&tag).map(String::as_str),
        }
    }

    /// Serializes to one JSON-lines record; feature keys follow `schema` order.
    pub fn to_json_line(&self, schema: &Schema) -> String {
        let mut features = serde_json::Map::new();
        for name in schema.names() {
            let v = self.features.get(name).unwrap_or(&FeatureValue::Missing);
            features.insert(name.to_string(), v.to_json());
        }
        let refined: serde_json::Map<String, Value> = self
            .refined_texts
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), Value::String(v.clone())))
            .collect();
        let obj = serde_json::json!({
            "id": self.id,
            "label": self.label,
            "loan_amount": self.loan_amount,
            "interest_rate": self.interest_rate,
            "term_months": self.term_months,
            "features": Value::Object(features),
            "human_text": self.human_text,
            "refined_texts": Value::Object(refined),
        });
        obj.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<LoanRecord>,
    pub schema: Schema,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line(&self.schema));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl())
            .map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let text = read(path)?;
    parse_dataset(&text, schema)
}

pub fn parse_dataset(text: &str, schema: &Schema) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec = parse_record(raw, line, schema)?;
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    Ok(Dataset { records, schema: schema.clone() })
}

fn parse_record(raw: &str, line: usize, schema: &Schema) -> Result<LoanRecord> {
    let malformed = |detail: String| CorpusError::Malformed { line, detail };
    let v: Value = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| malformed("record is not an object".into()))?;
    let field = |k: &str| obj.get(k).ok_or_else(|| malformed(format!("missing field {k:?}")));

    let id = field("id")?.as_str().ok_or_else(|| malformed("id must be a string".into()))?;
    let label = match field("label")? {
        Value::Number(n) if n.as_u64() == Some(0) => 0,
        Value::Number(n) if n.as_u64() == Some(1) => 1,
        other => return Err(CorpusError::InvalidLabel { line, value: other.to_string() }),
    };
    let loan_amount = field("loan_amount")?
        .as_f64()
        .filter(|v| *v > 0.0)
        .ok_or_else(|| malformed("loan_amount must be a positive number".into()))?;
    let interest_rate = field("interest_rate")?
        .as_f64()
        .filter(|v| *v >= 0.0)
        .ok_or_else(|| malformed("interest_rate must be a non-negative number".into()))?;
    let term_months = field("term_months")?
        .as_u64()
        .filter(|v| *v >= 1)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| malformed("term_months must be a positive integer".into()))?;
    let human_text = field("human_text")?
        .as_str()
        .ok_or_else(|| malformed("human_text must be a string".into()))?
        .to_string();

    let mut refined_texts = BTreeMap::new();
    if let Some(r) = obj.get("refined_texts") {
        let map = r.as_object().ok_or_else(|| malformed("refined_texts must be an object".into()))?;
        for (k, v) in map {
            let tag: VariantTag = k.parse().map_err(malformed)?;
            let s = v.as_str().ok_or_else(|| malformed(format!("refined text {k:?} must be a string")))?;
            refined_texts.insert(tag, s.to_string());
        }
    }

    let fobj = field("features")?
        .as_object()
        .ok_or_else(|| malformed("features must be an object".into()))?;
    for k in fobj.keys() {
        if schema.kind_of(k).is_none() {
            return Err(CorpusError::SchemaMismatch { line, detail: format!("unexpected feature {k:?}") });
        }
    }
    let mut features = BTreeMap::new();
    for spec in &schema.0 {
        let v = fobj.get(&spec.name).ok_or_else(|| CorpusError::SchemaMismatch {
            line,
            detail: format!("missing feature {:?}", spec.name),
        })?;
        let value = match (spec.kind, v) {
            (_, Value::Null) => FeatureValue::Missing,
            (_, Value::String(s)) if s.trim().is_empty() => FeatureValue::Missing,
            (FeatureKind::Continuous, Value::Number(n)) => {
                FeatureValue::Continuous(n.as_f64().ok_or_else(|| malformed("bad number".into()))?)
            }
            (FeatureKind::Continuous, Value::String(s)) => match s.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => FeatureValue::Continuous(x),
                _ => return Err(malformed(format!("feature {:?}: unparseable number {s:?}", spec.name))),
            },
            (FeatureKind::Categorical, Value::String(s)) => FeatureValue::Categorical(s.clone()),
            (FeatureKind::Categorical, Value::Number(n)) => FeatureValue::Categorical(n.to_string()),
            (FeatureKind::Categorical, Value::Bool(b)) => FeatureValue::Categorical(b.to_string()),
            (_, other) => {
                return Err(malformed(format!("feature {:?}: unsupported value {other}", spec.name)))
            }
        };
        features.insert(spec.name.clone(), value);
    }

    Ok(LoanRecord {
        id: id.to_string(),
        features,
        human_text,
        refined_texts,
        label,
        loan_amount,
        interest_rate,
        term_months,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// `x` rounded away from float noise: values within 1e-9 of an integer snap to it.
fn snap(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x
    }
}

/// Hamilton apportionment of `total` over `quotas`. Ties in the fractional
/// remainder go to the smaller stratum first, then the lower index.
fn largest_remainder(quotas: &[f64], sizes: &[usize], total: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = quotas.iter().map(|q| snap(*q).floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = snap(quotas[a]) - snap(quotas[a]).floor();
        let rb = snap(quotas[b]) - snap(quotas[b]).floor();
        rb.partial_cmp(&ra).unwrap().then(sizes[a].cmp(&sizes[b])).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &s in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[s] < sizes[s] {
            alloc[s] += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// Stratified train/validation/test split.
///
/// Test counts per label follow largest-remainder rounding of
/// `stratum × (1 − train_frac)` to `round(n × (1 − train_frac))`; the
/// validation set takes `ceil(val_frac_of_train × pool)` of the remaining
/// pool, again apportioned by largest remainder. Index sets are returned
/// sorted.
pub fn stratified_split(
    dataset: &Dataset,
    train_frac: f64,
    val_frac_of_train: f64,
    seed: u64,
) -> Result<SplitIndices> {
    let degenerate = |m: &str| CorpusError::DegenerateSplit(m.to_string());
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(degenerate("train_frac must lie in (0, 1)"));
    }
    if !(0.0..1.0).contains(&val_frac_of_train) {
        return Err(degenerate("val_frac_of_train must lie in [0, 1)"));
    }
    // strata ordered label 0, label 1
    let mut strata: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in dataset.records.iter().enumerate() {
        strata[r.label as usize].push(i);
    }
    if strata.iter().any(Vec::is_empty) {
        return Err(degenerate("both labels must be present"));
    }
    let n = dataset.len();
    let sizes = [strata[0].len(), strata[1].len()];
    let test_frac = 1.0 - train_frac;
    let test_quota: Vec<f64> = sizes.iter().map(|&s| s as f64 * test_frac).collect();
    let test_total = snap(n as f64 * test_frac).round() as usize;
    let test_alloc = largest_remainder(&test_quota, &sizes, test_total);

    let pool: Vec<usize> = (0..2).map(|s| sizes[s] - test_alloc[s]).collect();
    let pool_total: usize = pool.iter().sum();
    let val_total = snap(val_frac_of_train * pool_total as f64).ceil() as usize;
    let val_quota: Vec<f64> = pool.iter().map(|&p| p as f64 * val_frac_of_train).collect();
    let mut val_alloc = largest_remainder(&val_quota, &pool, val_total);
    // keep a defaulter in validation when the pool has one
    if val_total > 0 && val_alloc[1] == 0 && pool[1] > 0 && val_alloc[0] > 0 {
        val_alloc[1] = 1;
        val_alloc[0] -= 1;
    }

    let mut rng = rng::rng(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..2 {
        let mut idx = strata[s].clone();
        idx.shuffle(&mut rng);
        let (t, rest) = idx.split_at(test_alloc[s]);
        let (v, tr) = rest.split_at(val_alloc[s].min(rest.len()));
        test.extend_from_slice(t);
        val.extend_from_slice(v);
        train.extend_from_slice(tr);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    if train.is_empty() || test.is_empty() {
        return Err(degenerate("train and test sets must be non-empty"));
    }
    if val.is_empty() && val_frac_of_train > 0.0 {
        return Err(degenerate("validation set is empty"));
    }
    let train_labels: HashSet<u8> = train.iter().map(|&i| dataset.records[i].label).collect();
    if train_labels.len() < 2 {
        return Err(degenerate("training set contains a single class"));
    }
    Ok(SplitIndices { train, val, test, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Token-count summary per label. The standard deviation uses the n − 1
/// denominator and is 0 for a single observation.
pub fn text_length_stats(
    dataset: &Dataset,
    selector: TextSelector,
    tokenizer: &Tokenizer,
) -> Result<BTreeMap<u8, LengthStats>> {
    let mut groups: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for r in &dataset.records {
        let text = r.text(selector).ok_or_else(|| CorpusError::MissingText(r.id.clone()))?;
        groups.entry(r.label).or_default().push(tokenizer.tokenize(text).len() as f64);
    }
    Ok(groups
        .into_iter()
        .map(|(label, mut v)| {
            // sorting makes the float sums independent of record order
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            (label, LengthStats { count: n, mean, sd })
        })
        .collect())
}
