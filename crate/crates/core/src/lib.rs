//! Credit default scoring from structured loan attributes and free-text
//! loan assessments.
//!
//! The numeric core (metrics, network training, regression, statistics) is
//! generic over [`num::Real`]; profit ledgers are generic over
//! [`num::Field`] so they also run in exact rational arithmetic. The
//! aliases below fix the scalar to `f64`, which is what the pipeline uses.

pub mod corpus;
pub mod econ;
pub mod eval;
pub mod explain;
pub mod linalg;
pub mod lingcomp;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod refine;
pub mod rng;
pub mod synthgen;
pub mod tabular;
pub mod textfeat;

pub type Matrix = linalg::Matrix<f64>;
pub type EncodedMatrix = tabular::EncodedMatrix<f64>;
pub type MlpModel = model::MlpModel<f64>;
pub type ScoredSet = eval::ScoredSet<f64>;
pub type ProfitCurve = econ::ProfitCurve<f64>;
pub type EconConfig = econ::EconConfig<f64>;

/// Any failure of the pipeline, prefixed by the module it came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {path}: {detail}")]
    ConfigInvalid { path: String, detail: String },
    #[error("io: {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("corpus: {0}")]
    Corpus(#[from] corpus::CorpusError),
    #[error("tabular: {0}")]
    Tabular(#[from] tabular::TabularError),
    #[error("textfeat: {0}")]
    Text(#[from] textfeat::TextError),
    #[error("model: {0}")]
    Model(#[from] model::ModelError),
    #[error("eval: {0}")]
    Eval(#[from] eval::EvalError),
    #[error("explain: {0}")]
    Explain(#[from] explain::ExplainError),
    #[error("econ: {0}")]
    Econ(#[from] econ::EconError),
    #[error("lingcomp: {0}")]
    Ling(#[from] lingcomp::LingError),
    #[error("refine: {0}")]
    Refine(#[from] refine::RefineError),
    #[error("synthgen: {0}")]
    Synth(#[from] synthgen::SynthError),
    #[error("pipeline: {0}")]
    Pipeline(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Error::Io { path: path.display().to_string(), detail: e.to_string() }
    }
}
