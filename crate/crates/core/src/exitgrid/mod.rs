//! Exit rules, their grid search and HMM regime selection.

mod grid;
mod hmm;
mod objective;
mod optimize;
mod rules;
mod simulate;

use thiserror::Error;

pub use grid::{enumerate_grid, smooth_params, ExitParams, GridSpec};
pub use hmm::{
    fit_regime_hmm, relabel, viterbi_online, viterbi_regime, HmmFit, Regime, RegimeModel, HMM_MAX_ITER, HMM_TOL, MIN_HMM_OBS, N_STATES,
    SIGMA_FLOOR,
};
pub use objective::{evaluate_objective, ObjectiveBreakdown, ObjectiveWeights, DEFAULT_SLOT_FRACTION, RATIO_CAP};
pub use optimize::{
    evaluate_grid, optimize_per_regime, select_per_regime, write_grid_csv, GridEvalConfig, GridPoint, RegimeOptimum,
    MIN_REGIME_DAYS,
};
pub use rules::{ExitReason, ExitState};
pub use simulate::{simulate_exits, EntryRecord, SimTrade, GRID_ROUND_TRIP_COST};

#[derive(Debug, Error)]
pub enum ExitError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(String),
}
