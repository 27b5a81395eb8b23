//! Synthetic loan corpora with planted tabular and textual default signal.
//!
//! Every record's default probability is a logistic function of known
//! contributions, recorded in a ground-truth sidecar, so downstream models
//! and explanations can be checked against the truth.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, FeatureKind, FeatureSpec, FeatureValue, LoanRecord, Schema, VariantTag};
use crate::refine::{compose_variant, render_sections, Sections};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("cannot calibrate intercept to default rate {target} (reached {reached})")]
    CalibrationFailure { target: f64, reached: f64 },
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFeature {
    pub name: String,
    /// Log-odds contribution per standard deviation.
    pub strength: f64,
    pub mean: f64,
    pub sd: f64,
    pub missing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    /// Level name and its log-odds contribution; levels are drawn uniformly.
    pub levels: Vec<(String, f64)>,
    pub missing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub text: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub default_rate: f64,
    pub seed: u64,
    pub continuous: Vec<ContinuousFeature>,
    pub categorical: Vec<CategoricalFeature>,
    /// Clauses raising default risk (positive weight).
    pub risky_clauses: Vec<Clause>,
    /// Clauses lowering default risk (negative weight).
    pub safe_clauses: Vec<Clause>,
    /// Filler clauses without signal.
    pub neutral_clauses: Vec<Clause>,
    pub clauses_per_text: (usize, usize),
    pub loan_amount: (f64, f64),
    pub interest_rate: (f64, f64),
    pub term_months: Vec<u32>,
    pub refiner: bool,
}

fn clauses(items: &[(&str, f64)]) -> Vec<Clause> {
    items.iter().map(|&(t, w)| Clause { text: t.into(), weight: w }).collect()
}

fn cont(name: &str, strength: f64, mean: f64, sd: f64, missing_rate: f64) -> ContinuousFeature {
    ContinuousFeature { name: name.into(), strength, mean, sd, missing_rate }
}

fn cat(name: &str, levels: &[(&str, f64)], missing_rate: f64) -> CategoricalFeature {
    CategoricalFeature { name: name.into(), levels: levels.iter().map(|&(l, w)| (l.into(), w)).collect(), missing_rate }
}

impl SynthConfig {
    /// Mixed tabular and text signal at the given size and default rate.
    pub fn planted(n: usize, default_rate: f64, seed: u64) -> Self {
        Self {
            n,
            default_rate,
            seed,
            continuous: vec![
                cont("monthly_income", -0.8, 6000.0, 1800.0, 0.02),
                cont("age", -0.35, 38.0, 9.0, 0.0),
                cont("debt_ratio", 0.7, 0.35, 0.12, 0.02),
                cont("credit_history_months", -0.45, 60.0, 24.0, 0.0),
                cont("open_accounts", 0.0, 5.0, 2.0, 0.0),
                cont("loan_to_income", 0.55, 2.5, 0.8, 0.0),
                cont("savings_balance", 0.0, 20000.0, 8000.0, 0.05),
            ],
            categorical: vec![
                cat("education", &[("primary", 0.5), ("secondary", 0.0), ("bachelor", -0.3), ("master", -0.5)], 0.0),
                cat("marital_status", &[("single", 0.1), ("married", -0.1), ("divorced", 0.15)], 0.02),
                cat("housing", &[("own", -0.5), ("rent", 0.35), ("family", 0.0)], 0.0),
                cat("employment", &[("salaried", -0.35), ("self_employed", 0.5), ("contract", 0.15)], 0.0),
                cat("region", &[("north", 0.0), ("south", 0.0), ("east", 0.0), ("west", 0.0)], 0.0),
                cat("industry", &[("retail", 0.1), ("manufacturing", 0.0), ("services", -0.1), ("agriculture", 0.1)], 0.0),
                cat("guarantor", &[("yes", -0.25), ("no", 0.1)], 0.0),
                cat("collateral", &[("property", -0.2), ("vehicle", 0.0), ("none", 0.2)], 0.0),
                cat("loan_purpose", &[("business", 0.0), ("consumption", 0.1), ("education", -0.1)], 0.0),
                cat("gender", &[("female", 0.0), ("male", 0.0)], 0.0),
                cat("local_hukou", &[("yes", 0.0), ("no", 0.0)], 0.0),
            ],
            risky_clauses: clauses(&[
                ("has several overdue credit card payments", 2.0),
                ("was downgraded to a lower credit rating", 1.6),
                ("holds large receivables that strain cash flow", 1.4),
                ("reports unstable monthly business income", 1.5),
                ("has recently changed jobs twice", 1.1),
                ("carries heavy existing debt", 1.8),
                ("was vague about the purpose of the loan", 1.2),
                ("shows frequent cash withdrawals", 1.0),
                ("has a guarantor with weak finances", 1.1),
                ("missed a scheduled interview with the credit officer", 1.9),
            ]),
            safe_clauses: clauses(&[
                ("has a stable salary from a large employer", -1.6),
                ("owns a house without a mortgage", -1.4),
                ("repaid two previous loans on time", -1.9),
                ("keeps substantial savings in the bank", -1.2),
                ("cooperated fully with the credit investigation", -1.0),
                ("has good relationships with neighbours and peers", -0.9),
                ("runs a business with steady orders", -1.2),
                ("provided complete and valid documents", -1.1),
                ("has a spouse with a public sector job", -1.0),
                ("shows a clean personal credit report", -1.8),
            ]),
            neutral_clauses: clauses(&[
                ("lives in the city centre", 0.0),
                ("applied at the branch office", 0.0),
                ("was introduced by a relative", 0.0),
                ("prefers monthly repayment by bank transfer", 0.0),
                ("has two children in school", 0.0),
                ("enjoys playing table tennis", 0.0),
                ("drives a small family car", 0.0),
                ("moved to the area five years ago", 0.0),
            ]),
            clauses_per_text: (4, 7),
            loan_amount: (20_000.0, 200_000.0),
            interest_rate: (0.05, 0.15),
            term_months: vec![12, 24, 36],
            refiner: true,
        }
    }

    /// Same layout with every contribution zeroed.
    pub fn null_signal(n: usize, default_rate: f64, seed: u64) -> Self {
        let mut c = Self::planted(n, default_rate, seed);
        c.continuous.iter_mut().for_each(|f| f.strength = 0.0);
        c.categorical.iter_mut().flat_map(|f| f.levels.iter_mut()).for_each(|l| l.1 = 0.0);
        for cl in c.risky_clauses.iter_mut().chain(&mut c.safe_clauses) {
            cl.weight = 0.0;
        }
        c
    }

    /// Signal carried by the text alone.
    pub fn text_only(n: usize, default_rate: f64, seed: u64) -> Self {
        let mut c = Self::planted(n, default_rate, seed);
        c.continuous.iter_mut().for_each(|f| f.strength = 0.0);
        c.categorical.iter_mut().flat_map(|f| f.levels.iter_mut()).for_each(|l| l.1 = 0.0);
        c
    }

    /// 2460 loans with 60 expected defaults.
    pub fn full_scale(seed: u64) -> Self {
        Self::planted(2460, 60.0 / 2460.0, seed)
    }

    /// Desk-scale balanced variant with a 10% default rate.
    pub fn balanced(seed: u64) -> Self {
        Self::planted(2000, 0.10, seed)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if !(self.default_rate > 0.0 && self.default_rate < 1.0) {
            return bad("default_rate must lie in (0, 1)");
        }
        if self.risky_clauses.is_empty() || self.safe_clauses.is_empty() {
            return bad("clause banks must be non-empty");
        }
        let (lo, hi) = self.clauses_per_text;
        let bank = self.risky_clauses.len() + self.safe_clauses.len() + self.neutral_clauses.len();
        if lo == 0 || lo > hi || hi > bank {
            return bad("clauses_per_text must satisfy 1 <= min <= max <= bank size");
        }
        let weights = self.all_clauses().map(|c| c.weight);
        let strengths = self.continuous.iter().map(|f| f.strength).chain(self.categorical.iter().flat_map(|f| f.levels.iter().map(|l| l.1)));
        if weights.chain(strengths).any(|w| !w.is_finite()) {
            return bad("contributions must be finite");
        }
        if self.categorical.iter().any(|f| f.levels.is_empty()) {
            return bad("categorical features need at least one level");
        }
        let rates = self.continuous.iter().map(|f| f.missing_rate).chain(self.categorical.iter().map(|f| f.missing_rate));
        if rates.clone().any(|r| !(0.0..1.0).contains(&r)) {
            return bad("missing_rate must lie in [0, 1)");
        }
        if !(self.loan_amount.0 > 0.0 && self.loan_amount.0 <= self.loan_amount.1) {
            return bad("loan_amount range must be positive and ordered");
        }
        if !(self.interest_rate.0 >= 0.0 && self.interest_rate.0 <= self.interest_rate.1) {
            return bad("interest_rate range must be non-negative and ordered");
        }
        if self.term_months.is_empty() || self.term_months.contains(&0) {
            return bad("term_months must list positive terms");
        }
        Ok(())
    }

    fn all_clauses(&self) -> impl Iterator<Item = &Clause> {
        self.risky_clauses.iter().chain(&self.safe_clauses).chain(&self.neutral_clauses)
    }

    pub fn schema(&self) -> Schema {
        let cont = self.continuous.iter().map(|f| FeatureSpec { name: f.name.clone(), kind: FeatureKind::Continuous });
        let cats = self.categorical.iter().map(|f| FeatureSpec { name: f.name.clone(), kind: FeatureKind::Categorical });
        Schema(cont.chain(cats).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseKind {
    Risky,
    Safe,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseTruth {
    pub index: usize,
    pub text: String,
    pub weight: f64,
    pub kind: ClauseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTruth {
    pub id: String,
    pub feature_contributions: BTreeMap<String, f64>,
    /// Indices into the clause table, in text order.
    pub clauses: Vec<usize>,
    pub clause_contributions: Vec<f64>,
    pub log_odds: f64,
    pub probability: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub intercept: f64,
    pub target_default_rate: f64,
    pub clauses: Vec<ClauseTruth>,
    pub records: Vec<RecordTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intercept whose mean logistic probability over `scores` equals `target`.
fn calibrate(scores: &[f64], target: f64) -> Result<f64, SynthError> {
    let rate = |b: f64| scores.iter().map(|s| logistic(b + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    let reached = rate(b);
    if (reached - target).abs() > 1e-6 {
        return Err(SynthError::CalibrationFailure { target, reached });
    }
    Ok(b)
}

fn sentence(clauses: &[&str]) -> String {
    let body = clauses.join(", ");
    let mut chars = body.chars();
    match chars.next() {
        Some(c) => format!("The borrower {}{}.", c, chars.as_str()),
        None => String::new(),
    }
}

/// Rule-based stand-in for the LLM: risk-raising clauses become default
/// factors, everything else supporting factors. Each risk factor gets an
/// extra elaboration sentence, so riskier borrowers get longer refinements.
fn rule_refine(kinds_and_texts: &[(ClauseKind, &str)]) -> Sections {
    let mut positive: Vec<String> = Vec::new();
    let mut negative: Vec<String> = Vec::new();
    for &(kind, text) in kinds_and_texts {
        match kind {
            ClauseKind::Risky => negative.push(format!(
                "The borrower {text}. This may weaken the borrower's ability to repay, so the bank should review it carefully."
            )),
            ClauseKind::Safe | ClauseKind::Neutral => positive.push(format!("The borrower {text}.")),
        }
    }
    if positive.is_empty() {
        positive.push("No clear supporting factors are identified.".into());
    }
    if negative.is_empty() {
        negative.push("No obvious default risk factors are identified.".into());
    }
    Sections { positive: positive.join(" "), negative: negative.join(" ") }
}

/// Generates the corpus and its ground truth; identical configs give
/// identical output.
pub fn generate(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut tab_rng = rng::rng_from(cfg.seed, &[0]);
    let mut text_rng = rng::rng_from(cfg.seed, &[1]);
    let mut econ_rng = rng::rng_from(cfg.seed, &[2]);
    let mut label_rng = rng::rng_from(cfg.seed, &[3]);

    let table: Vec<ClauseTruth> = [
        (ClauseKind::Risky, &cfg.risky_clauses),
        (ClauseKind::Safe, &cfg.safe_clauses),
        (ClauseKind::Neutral, &cfg.neutral_clauses),
    ]
    .into_iter()
    .flat_map(|(kind, bank)| bank.iter().map(move |c| (kind, c)))
    .enumerate()
    .map(|(index, (kind, c))| ClauseTruth { index, text: c.text.clone(), weight: c.weight, kind })
    .collect();

    let width = cfg.n.to_string().len().max(5);
    let mut records = Vec::with_capacity(cfg.n);
    let mut truths = Vec::with_capacity(cfg.n);
    let mut scores = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let id = format!("L{:0width$}", i + 1);
        let mut features = BTreeMap::new();
        let mut contrib = BTreeMap::new();
        for f in &cfg.continuous {
            let z: f64 = tab_rng.sample(StandardNormal);
            let missing = tab_rng.random::<f64>() < f.missing_rate;
            let value = if missing { FeatureValue::Missing } else { FeatureValue::Continuous(f.mean + f.sd * z) };
            features.insert(f.name.clone(), value);
            contrib.insert(f.name.clone(), f.strength * z);
        }
        for f in &cfg.categorical {
            let (level, w) = &f.levels[tab_rng.random_range(0..f.levels.len())];
            let missing = tab_rng.random::<f64>() < f.missing_rate;
            let value = if missing { FeatureValue::Missing } else { FeatureValue::Categorical(level.clone()) };
            features.insert(f.name.clone(), value);
            contrib.insert(f.name.clone(), *w);
        }
        let k = text_rng.random_range(cfg.clauses_per_text.0..=cfg.clauses_per_text.1);
        let picked: Vec<usize> = sample(&mut text_rng, table.len(), k).into_vec();
        let clause_contributions: Vec<f64> = picked.iter().map(|&j| table[j].weight).collect();
        let score = contrib.values().sum::<f64>() + clause_contributions.iter().sum::<f64>();
        scores.push(score);

        let texts: Vec<&str> = picked.iter().map(|&j| table[j].text.as_str()).collect();
        let human_text = sentence(&texts);
        let mut refined_texts = BTreeMap::new();
        if cfg.refiner {
            let kinds: Vec<(ClauseKind, &str)> = picked.iter().map(|&j| (table[j].kind, table[j].text.as_str())).collect();
            let sections = rule_refine(&kinds);
            refined_texts.insert(VariantTag::Full, render_sections(&sections));
            for tag in [VariantTag::Positive, VariantTag::Negative, VariantTag::PosNeg, VariantTag::NegPos] {
                refined_texts.insert(tag, compose_variant(&sections, tag).expect("sections are non-empty"));
            }
        }
        let loan_amount = (econ_rng.random_range(cfg.loan_amount.0..=cfg.loan_amount.1) / 100.0).round() * 100.0;
        let interest_rate = (econ_rng.random_range(cfg.interest_rate.0..=cfg.interest_rate.1) * 1e4).round() / 1e4;
        let term_months = cfg.term_months[econ_rng.random_range(0..cfg.term_months.len())];
        records.push(LoanRecord {
            id: id.clone(),
            features,
            human_text,
            refined_texts,
            label: 0,
            loan_amount,
            interest_rate,
            term_months,
        });
        truths.push(RecordTruth {
            id,
            feature_contributions: contrib,
            clauses: picked,
            clause_contributions,
            log_odds: 0.0,
            probability: 0.0,
            label: 0,
        });
    }

    let intercept = calibrate(&scores, cfg.default_rate)?;
    for ((rec, truth), s) in records.iter_mut().zip(&mut truths).zip(&scores) {
        truth.log_odds = intercept + s;
        truth.probability = logistic(truth.log_odds);
        rec.label = u8::from(label_rng.random::<f64>() < truth.probability);
        truth.label = rec.label;
    }
    let dataset = Dataset { records, schema: cfg.schema() };
    let truth = GroundTruth {
        seed: cfg.seed,
        intercept,
        target_default_rate: cfg.default_rate,
        clauses: table,
        records: truths,
    };
    Ok((dataset, truth))
}

/// Writes `corpus.jsonl`, `schema.json` and `truth.json` into `dir`.
pub fn write_outputs(dir: &Path, dataset: &Dataset, truth: &GroundTruth) -> Result<(), SynthError> {
    let io = |e: std::io::Error| SynthError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("corpus.jsonl"), dataset.to_jsonl()).map_err(io)?;
    let schema = serde_json::to_string_pretty(&dataset.schema).expect("schema serializes");
    std::fs::write(dir.join("schema.json"), schema).map_err(io)?;
    std::fs::write(dir.join("truth.json"), truth.to_json()).map_err(io)
}
