//! Cross-sectional ranking network: forward pass, softmax ranking, combined
//! loss and walk-forward training.

mod loss;
mod network;
mod train;

use thiserror::Error;

pub use loss::{combined_loss, rank_probabilities};
pub use network::{BatchNorm, ForwardCache, Gradients, Layer, Mode, NetworkParams};
pub use train::{
    predict_scores, train_on_days, train_walk_forward, training_days, NetworkConfig, RankScore, TrainingDay,
    TrainedModel,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
