//! Event-driven daily-rebalance backtesting engine with a multi-day turnover
//! strategy stack: cross-sectional ranking network, opening-signal mixture
//! model, constrained position sizing, grid-optimized exits with regime
//! smoothing, and multi-scale volatility timing.
//!
//! Numerical kernels are generic over [`Real`]; the aliases at the crate root
//! fix them to `f64`, the precision used by the backtest pipeline.

pub mod backtest;
pub mod config;
pub mod crosssection;
pub mod error;
pub mod exitgrid;
pub mod features;
pub mod marketdata;
pub mod opening;
pub mod optim;
pub mod scalar;
pub mod sizing;
pub mod stats;
pub mod timing;
pub mod volatility;

pub use config::RunConfig;
pub use error::Error;
pub use scalar::Real;

/// `f64` instantiations of the generic kernels.
pub type RegimeModel = exitgrid::RegimeModel<f64>;
pub type HmmFit = exitgrid::HmmFit<f64>;
pub type BoostedEnsemble = timing::BoostedEnsemble<f64>;
pub type Ensemble = timing::Ensemble<f64>;
