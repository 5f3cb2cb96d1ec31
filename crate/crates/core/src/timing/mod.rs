//! Market timing: multi-scale features, regime-aware boosting and the
//! exposure multiplier.

mod boost;
mod features;
mod signal;

use thiserror::Error;

pub use boost::{fit_ensemble, fit_timing_model, BoostConfig, BoostedEnsemble, Ensemble, Node, Tree, MIN_REGIME_SAMPLES};
pub use features::{
    build_multiscale_features, cross_sectional_dispersion, MultiScaleFeatures, TimingFeatureBuilder, FEATURE_NAMES,
    MIN_TIMING_HISTORY, PROXY_FEATURES,
};
pub use signal::{apply_timing_filter, exposure_multiplier, timing_signal, TimingSignal, DEFAULT_BETAS};

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("unknown date {0}")]
    UnknownDate(chrono::NaiveDate),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
