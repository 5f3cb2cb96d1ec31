use serde::{Deserialize, Serialize};

use crate::stats;

pub const TRADING_DAYS: f64 = 252.0;

/// Undefined ratios are `None` rather than NaN or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTable {
    pub n_days: usize,
    pub total_return: f64,
    pub annual_return: f64,
    pub annual_volatility: f64,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub calmar: Option<f64>,
    pub max_drawdown: f64,
    pub win_rate: Option<f64>,
    pub avg_holding_days: Option<f64>,
    pub annual_turnover: f64,
    pub var_95: Option<f64>,
    pub expected_shortfall: Option<f64>,
    pub max_daily_loss: Option<f64>,
    /// Daily returns had zero spread.
    pub zero_volatility: bool,
}

/// Round-trip summary used by the ledger-based metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeOutcome {
    pub net_pnl: f64,
    pub holding_days: u32,
}

pub fn daily_returns(equity: &[f64]) -> Vec<f64> {
    equity.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut dd: f64 = 0.0;
    for &e in equity {
        peak = peak.max(e);
        if peak > 0.0 {
            dd = dd.max((peak - e) / peak);
        }
    }
    dd
}

/// Metrics from a series of daily returns. `traded_notional` and
/// `mean_equity` feed the turnover figure.
pub fn metrics_from_returns(
    returns: &[f64],
    trades: &[TradeOutcome],
    risk_free: f64,
    traded_notional: f64,
    mean_equity: f64,
) -> MetricTable {
    let n = returns.len();
    let mut curve = Vec::with_capacity(n + 1);
    curve.push(1.0);
    for r in returns {
        curve.push(curve.last().expect("non-empty") * (1.0 + r));
    }
    let growth = *curve.last().expect("non-empty");
    let total_return = growth - 1.0;
    let annual_return = if n == 0 { 0.0 } else { growth.powf(TRADING_DAYS / n as f64) - 1.0 };
    let sd = stats::std_sample(returns).unwrap_or(0.0);
    let annual_volatility = sd * TRADING_DAYS.sqrt();
    let zero_volatility = !(sd > 0.0);
    let excess = annual_return - risk_free;
    let sharpe = (!zero_volatility).then(|| excess / annual_volatility);
    let rf_daily = (1.0 + risk_free).powf(1.0 / TRADING_DAYS) - 1.0;
    let downside = if n == 0 {
        0.0
    } else {
        (returns.iter().map(|r| (r - rf_daily).min(0.0).powi(2)).sum::<f64>() / n as f64).sqrt() * TRADING_DAYS.sqrt()
    };
    let sortino = (!zero_volatility && downside > 0.0).then(|| excess / downside);
    let mdd = max_drawdown(&curve);
    let calmar = (mdd > 0.0).then(|| annual_return / mdd);
    let win_rate = (!trades.is_empty()).then(|| trades.iter().filter(|t| t.net_pnl > 0.0).count() as f64 / trades.len() as f64);
    let avg_holding_days =
        (!trades.is_empty()).then(|| trades.iter().map(|t| t.holding_days as f64).sum::<f64>() / trades.len() as f64);
    let annual_turnover = if n > 0 && mean_equity > 0.0 { traded_notional / mean_equity * TRADING_DAYS / n as f64 } else { 0.0 };
    let var_95 = stats::quantile(returns, 0.05);
    let expected_shortfall = var_95.and_then(|v| {
        let tail: Vec<f64> = returns.iter().copied().filter(|r| *r <= v).collect();
        stats::mean(&tail)
    });
    let max_daily_loss = returns.iter().copied().reduce(f64::min);
    MetricTable {
        n_days: n,
        total_return,
        annual_return,
        annual_volatility,
        sharpe,
        sortino,
        calmar,
        max_drawdown: mdd,
        win_rate,
        avg_holding_days,
        annual_turnover,
        var_95,
        expected_shortfall,
        max_daily_loss,
        zero_volatility,
    }
}

/// Metrics from an equity curve (at least two points) and the closed trades.
pub fn compute_metrics(equity: &[f64], trades: &[TradeOutcome], risk_free: f64, traded_notional: f64) -> Option<MetricTable> {
    if equity.len() < 2 || equity.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let mean_equity = stats::mean(equity).expect("non-empty");
    Some(metrics_from_returns(&daily_returns(equity), trades, risk_free, traded_notional, mean_equity))
}
