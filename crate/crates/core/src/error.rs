//! Crate-level error with the CLI exit-status mapping.

use thiserror::Error;

use crate::backtest::BacktestError;
use crate::crosssection::NetError;
use crate::exitgrid::ExitError;
use crate::marketdata::DataError;
use crate::opening::OpeningError;
use crate::sizing::SizingError;
use crate::timing::TimingError;
use crate::volatility::VolError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("crosssection: {0}")]
    Network(#[from] NetError),
    #[error("volatility: {0}")]
    Volatility(#[from] VolError),
    #[error("opening: {0}")]
    Opening(#[from] OpeningError),
    #[error("sizing: {0}")]
    Sizing(#[from] SizingError),
    #[error("exitgrid: {0}")]
    Exit(#[from] ExitError),
    #[error("timing: {0}")]
    Timing(#[from] TimingError),
    #[error("backtest: {0}")]
    Backtest(#[from] BacktestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// 1 configuration, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Network(NetError::Config(_)) => 1,
            Error::Volatility(VolError::Config(_)) => 1,
            Error::Sizing(SizingError::Config(_)) => 1,
            Error::Exit(ExitError::Config(_)) => 1,
            Error::Timing(TimingError::Config(_)) => 1,
            Error::Backtest(BacktestError::Config(_)) => 1,
            Error::Data(DataError::Config(_)) => 1,
            Error::Data(_) => 2,
            Error::Volatility(VolError::Data(_)) => 2,
            Error::Exit(ExitError::Data(_)) => 2,
            Error::Timing(TimingError::Data(_)) => 2,
            _ => 3,
        }
    }
}
