//! Opening signals, the regularized three-component mixture, dynamic
//! thresholds and entry decisions.

mod decision;
mod engine;
mod gmm;
mod signal;
mod weights;

use chrono::NaiveDate;
use thiserror::Error;

pub use decision::{adapt_threshold, entry_decision, tail_probability, EntryThresholds, TailMode};
pub use engine::{DayOpening, OpeningConfig, OpeningPanel};
pub use gmm::{fit_gmm_em, fit_gmm_em_from, penalized_weights, GmmFit, GmmParams, MIN_GMM_SAMPLES, WEIGHT_FLOOR};
pub use signal::{
    compute_opening_signal, signal_components, ConstantVol, OpeningSignal, SentimentProvider, VolSource, ZeroSentiment,
    MIN_PRIOR_BARS, VR_WINDOW,
};
pub use weights::{estimate_signal_weights, SignalObservation, WeightEstimate, MIN_WEIGHT_OBS, RIDGE_PENALTY};

#[derive(Debug, Error)]
pub enum OpeningError {
    #[error("signal unavailable: {0}")]
    Unavailable(String),
    #[error("date {0} not in calendar")]
    UnknownDate(NaiveDate),
    #[error("fit error: {0}")]
    Fit(String),
}
