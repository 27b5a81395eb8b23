//! Feature assembly, the feed-forward scorer and its training loop.

mod assemble;
mod mlp;

pub use assemble::{assemble, TextBlock, Variant};
pub use mlp::{
    bce_loss, grid_search, gradient_check, predict_proba, train, Activation, GridOutcome, MlpConfig, MlpModel,
    Optimizer, TrainReport,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("row ids differ between feature sources: {0}")]
    RowMismatch(String),
    #[error("no feature source provided for the {0} variant")]
    EmptySource(Variant),
    #[error("training rows contain a single class")]
    SingleClassTrain,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("input columns do not match the model's: {0}")]
    ColumnMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("every configuration failed; first error: {0}")]
    AllConfigsFailed(Box<ModelError>),
    #[error("model file: {0}")]
    Serde(String),
}
