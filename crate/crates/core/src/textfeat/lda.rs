//! Latent Dirichlet allocation by collapsed Gibbs sampling.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::TextError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub n_topics: usize,
    /// Symmetric document-topic prior; `None` means `50 / n_topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub infer_iterations: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { n_topics: 30, alpha: None, beta: 0.01, iterations: 500, infer_iterations: 100, seed: 0 }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.n_topics.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocabulary: BTreeMap<String, usize>,
    /// Row-major `n_topics × vocabulary` assignment counts.
    pub topic_word: Vec<u32>,
    pub topic_totals: Vec<u64>,
    pub iterations: usize,
    pub seed: u64,
}

fn sample(rng: &mut rng::Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

pub fn fit_lda<S: AsRef<str>>(docs: &[Vec<S>], cfg: &LdaConfig) -> Result<LdaModel, TextError> {
    if cfg.n_topics < 1 {
        return Err(TextError::InvalidTopics(cfg.n_topics));
    }
    if docs.iter().all(|d| d.is_empty()) {
        return Err(TextError::EmptyCorpus);
    }
    let mut vocabulary = BTreeMap::new();
    for d in docs {
        for t in d {
            vocabulary.entry(t.as_ref().to_string()).or_insert(0usize);
        }
    }
    for (i, v) in vocabulary.values_mut().enumerate() {
        *v = i;
    }
    let words: Vec<Vec<usize>> =
        docs.iter().map(|d| d.iter().map(|t| vocabulary[t.as_ref()]).collect()).collect();

    let k_n = cfg.n_topics;
    let v_n = vocabulary.len();
    let alpha = cfg.alpha();
    let beta = cfg.beta;
    let v_beta = v_n as f64 * beta;
    let mut rng = rng::rng(cfg.seed);

    let mut topic_word = vec![0u32; k_n * v_n];
    let mut topic_totals = vec![0u64; k_n];
    let mut doc_topic: Vec<Vec<u32>> = vec![vec![0; k_n]; words.len()];
    let mut assign: Vec<Vec<usize>> = Vec::with_capacity(words.len());
    for (d, doc) in words.iter().enumerate() {
        let z: Vec<usize> = doc.iter().map(|_| rng.random_range(0..k_n)).collect();
        for (&w, &k) in doc.iter().zip(&z) {
            topic_word[k * v_n + w] += 1;
            topic_totals[k] += 1;
            doc_topic[d][k] += 1;
        }
        assign.push(z);
    }

    let mut p = vec![0.0; k_n];
    for _ in 0..cfg.iterations {
        for (d, doc) in words.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = assign[d][i];
                topic_word[old * v_n + w] -= 1;
                topic_totals[old] -= 1;
                doc_topic[d][old] -= 1;
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = (doc_topic[d][k] as f64 + alpha) * (topic_word[k * v_n + w] as f64 + beta)
                        / (topic_totals[k] as f64 + v_beta);
                }
                let new = sample(&mut rng, &p);
                topic_word[new * v_n + w] += 1;
                topic_totals[new] += 1;
                doc_topic[d][new] += 1;
                assign[d][i] = new;
            }
        }
    }

    Ok(LdaModel {
        n_topics: k_n,
        alpha,
        beta,
        vocabulary,
        topic_word,
        topic_totals,
        iterations: cfg.iterations,
        seed: cfg.seed,
    })
}

impl LdaModel {
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Smoothed topic-word distributions, one row per topic.
    pub fn topic_word_distribution(&self) -> Vec<Vec<f64>> {
        let v_n = self.vocab_size();
        (0..self.n_topics)
            .map(|k| {
                let denom = self.topic_totals[k] as f64 + v_n as f64 * self.beta;
                (0..v_n).map(|w| (self.topic_word[k * v_n + w] as f64 + self.beta) / denom).collect()
            })
            .collect()
    }
}

/// Topic proportions of a new document, sampling its assignments with the
/// topic-word counts held fixed. Out-of-vocabulary tokens are ignored; a
/// document with no known tokens gets the uniform prior.
pub fn infer_topics<S: AsRef<str>>(model: &LdaModel, tokens: &[S], iterations: usize, seed: u64) -> Vec<f64> {
    let k_n = model.n_topics;
    let words: Vec<usize> = tokens.iter().filter_map(|t| model.vocabulary.get(t.as_ref()).copied()).collect();
    if words.is_empty() || k_n == 1 {
        return vec![1.0 / k_n as f64; k_n];
    }
    let v_n = model.vocab_size();
    let phi = |k: usize, w: usize| {
        (model.topic_word[k * v_n + w] as f64 + model.beta)
            / (model.topic_totals[k] as f64 + v_n as f64 * model.beta)
    };
    let mut rng = rng::rng(seed);
    let mut counts = vec![0u32; k_n];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let k = rng.random_range(0..k_n);
            counts[k] += 1;
            k
        })
        .collect();
    let mut p = vec![0.0; k_n];
    for _ in 0..iterations {
        for (i, &w) in words.iter().enumerate() {
            counts[z[i]] -= 1;
            for (k, pk) in p.iter_mut().enumerate() {
                *pk = (counts[k] as f64 + model.alpha) * phi(k, w);
            }
            z[i] = sample(&mut rng, &p);
            counts[z[i]] += 1;
        }
    }
    let denom = words.len() as f64 + k_n as f64 * model.alpha;
    counts.iter().map(|&c| (c as f64 + model.alpha) / denom).collect()
}
