//! Daily execution loop, transaction costs, performance metrics, the full
//! walk-forward run and the component ablation.

mod ablation;
mod costs;
mod engine;
mod metrics;
mod pipeline;
mod report;

use thiserror::Error;

pub use ablation::{run_ablation, run_ablation_prepared, write_ablation_csv, AblationRow, ABLATION_ROWS};
pub use costs::{apply_costs, market_impact, market_impact_with, CostModel, FillIntent, Side, StampSide, TradeCosts};
pub use engine::{
    daily_rebalance, run_engine, ClosedTrade, ConstantLiquidity, DayOutcome, DayRecord, Decision, DecisionMeta,
    EngineConfig, EngineOutput, EntryOrder, Liquidity, PortfolioState, Position, TradeReason, TradeRecord,
};
pub use metrics::{compute_metrics, daily_returns, max_drawdown, metrics_from_returns, MetricTable, TradeOutcome, TRADING_DAYS};
pub use pipeline::{run_backtest, run_prepared, GridOutcome, PanelLiquidity, Prepared};
pub use report::{
    masked_metrics, regime_report, write_report, BacktestReport, RegimeRow, REPORT_FILES,
};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("config error: {0}")]
    Config(String),
    #[error("order error: {0}")]
    Order(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
