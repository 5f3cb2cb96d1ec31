//! Volatility stack: GARCH(1,1), realized variance, particle-filter
//! stochastic volatility, Kalman-weighted combination and a market stress
//! index.

mod garch;
mod kalman;
mod realized;
mod stress;
mod surface;
mod sv;

use thiserror::Error;

pub use garch::{fit_garch, fit_garch_from, fit_garch_or_fallback, GarchFit, GarchParams, MAX_PERSISTENCE, MIN_GARCH_OBS};
pub use kalman::{combine_vols, Combined, KalmanCombiner, KalmanConfig};
pub use realized::realized_vol;
pub use stress::{stress_index, stress_level, stress_zscore, StressIndex, StressTracker, TRADING_DAYS};
pub use surface::{VolConfig, VolEstimate, VolSurface};
pub use sv::{default_mu, particle_filter_sv, SvConfig, SvFilter, SvPath, SvStep, MIN_PARTICLES};

#[derive(Debug, Error)]
pub enum VolError {
    #[error("data error: {0}")]
    Data(String),
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("config error: {0}")]
    Config(String),
}
