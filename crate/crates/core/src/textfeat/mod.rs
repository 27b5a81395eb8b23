//! Document featurizers: tokenization, TF-IDF, LDA topic proportions,
//! averaged word vectors and precomputed document vectors.

mod embed;
mod lda;
mod tfidf;
mod tokenize;

pub use embed::{avg_embed, load_doc_vectors, load_word_vectors, parse_doc_vectors, parse_word_vectors, WordVectors};
pub use lda::{fit_lda, infer_topics, LdaConfig, LdaModel};
pub use tfidf::{fit_tfidf, sparse_cosine, SparseVec, TfidfModel};
pub use tokenize::{truncate_tokens, TokenMode, Tokenizer, DEFAULT_PUNCTUATION, MAX_ENCODER_TOKENS};

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("number of topics must be at least 1, got {0}")]
    InvalidTopics(usize),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: dimension mismatch (expected {expected}, found {found})")]
    DimMismatch { line: usize, expected: usize, found: usize },
    #[error("document {id:?}: dimension mismatch (expected {expected}, found {found})")]
    DocDimMismatch { id: String, expected: usize, found: usize },
    #[error("line {line}: malformed line: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("document {0:?} has a non-finite value")]
    NonFiniteValue(String),
    #[error("missing document vectors for ids: {}", .0.join(", "))]
    MissingId(Vec<String>),
}

/// Where a document vector came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Lda,
    Wordvec,
    Tfidf,
    Docvec(String),
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSource::Lda => f.write_str("lda"),
            FeatureSource::Wordvec => f.write_str("wordvec"),
            FeatureSource::Tfidf => f.write_str("tfidf"),
            FeatureSource::Docvec(name) => write!(f, "docvec:{name}"),
        }
    }
}

/// A fixed-dimension vector for one document from one featurizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocFeatures {
    pub id: String,
    pub source: FeatureSource,
    pub values: Vec<f64>,
    /// Set when the text exceeded the encoder's token limit upstream.
    #[serde(default)]
    pub truncated: bool,
}

impl DocFeatures {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}
