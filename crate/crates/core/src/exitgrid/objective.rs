use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::simulate::SimTrade;
use super::ExitError;
use crate::stats;

/// Cap on CumReturn / MaxDrawdown, also used when the path never draws down.
pub const RATIO_CAP: f64 = 10.0;
/// Notional per simulated trade as a fraction of equity.
pub const DEFAULT_SLOT_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub win_rate: f64,
    pub return_drawdown: f64,
    pub turnover_efficiency: f64,
    pub consistency: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { win_rate: 0.25, return_drawdown: 0.35, turnover_efficiency: 0.25, consistency: 0.15 }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<(), ExitError> {
        let w = [self.win_rate, self.return_drawdown, self.turnover_efficiency, self.consistency];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ExitError::Config("objective weights must be finite and non-negative".into()));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ExitError::Config("objective weights must sum to 1".into()));
        }
        Ok(())
    }
}

/// The four raw terms, their weighted contributions and the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub n_trades: usize,
    pub win_rate: f64,
    pub cum_return: f64,
    pub max_drawdown: f64,
    pub return_drawdown: f64,
    pub annual_return: f64,
    pub annual_turnover: f64,
    pub turnover_efficiency: f64,
    pub consistency: f64,
    /// Fewer than two months of data; consistency was set to 0.
    pub short_history: bool,
    pub contributions: [f64; 4],
    pub value: f64,
}

/// Scores a trade ledger. Each trade carries `slot` of equity and its net
/// return is booked on the exit day, giving an additive equity path. The
/// span runs from the first entry to the last exit in trading days.
/// Returns `None` for an empty ledger.
pub fn evaluate_objective(trades: &[SimTrade], weights: &ObjectiveWeights, slot: f64) -> Option<ObjectiveBreakdown> {
    if trades.is_empty() {
        return None;
    }
    let n = trades.len();
    let wins = trades.iter().filter(|t| t.net_return > 0.0).count();
    let win_rate = wins as f64 / n as f64;

    let mut order: Vec<&SimTrade> = trades.iter().collect();
    order.sort_by_key(|t| (t.exit_day, t.entry_day, t.instrument));

    // Equity after each exit day, plus month-end marks.
    let mut equity = 1.0;
    let mut peak = 1.0;
    let mut max_dd: f64 = 0.0;
    let mut month_marks: Vec<f64> = Vec::new();
    let mut cur_month = None;
    let mut i = 0;
    while i < order.len() {
        let day = order[i].exit_day;
        let date = order[i].exit_date;
        let mut j = i;
        while j < order.len() && order[j].exit_day == day {
            equity += slot * order[j].net_return;
            j += 1;
        }
        peak = f64::max(peak, equity);
        max_dd = max_dd.max((peak - equity) / peak);
        let key = (date.year(), date.month());
        if cur_month != Some(key) {
            month_marks.push(equity);
            cur_month = Some(key);
        } else {
            *month_marks.last_mut().expect("month started") = equity;
        }
        i = j;
    }
    let cum_return = equity - 1.0;
    let return_drawdown = if max_dd > 0.0 {
        (cum_return / max_dd).min(RATIO_CAP)
    } else if cum_return > 0.0 {
        RATIO_CAP
    } else {
        0.0
    };

    let first = trades.iter().map(|t| t.entry_day).min().expect("non-empty");
    let last = trades.iter().map(|t| t.exit_day).max().expect("non-empty");
    let years = (last - first + 1) as f64 / 252.0;
    let annual_return = if equity > 0.0 { equity.powf(1.0 / years) - 1.0 } else { -1.0 };
    let annual_turnover = 2.0 * n as f64 * slot / years;
    let turnover_efficiency = if annual_turnover > 0.0 { annual_return / annual_turnover } else { 0.0 };

    let mut monthly = Vec::with_capacity(month_marks.len());
    let mut prev = 1.0;
    for &m in &month_marks {
        monthly.push(m / prev - 1.0);
        prev = m;
    }
    let short_history = monthly.len() < 2;
    let consistency = if short_history {
        0.0
    } else {
        let mu = stats::mean(&monthly).expect("two months");
        if mu <= 0.0 {
            -1.0
        } else {
            (1.0 - stats::std_sample(&monthly).expect("two months") / mu).max(-1.0)
        }
    };

    let contributions = [
        weights.win_rate * win_rate,
        weights.return_drawdown * return_drawdown,
        weights.turnover_efficiency * turnover_efficiency,
        weights.consistency * consistency,
    ];
    Some(ObjectiveBreakdown {
        n_trades: n,
        win_rate,
        cum_return,
        max_drawdown: max_dd,
        return_drawdown,
        annual_return,
        annual_turnover,
        turnover_efficiency,
        consistency,
        short_history,
        contributions,
        value: contributions.iter().sum(),
    })
}
