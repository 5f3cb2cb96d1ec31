//! Per-day exit checks shared by the grid simulator and the backtest.

use serde::{Deserialize, Serialize};

use super::grid::ExitParams;
use crate::marketdata::DailyBar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExitReason {
    ProfitTake,
    StopLoss,
    TrailingStop,
    TimeStop,
}

/// Open-position state for the exit rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitState {
    pub entry_price: f64,
    /// Highest high seen on completed days, as a return on the entry price.
    pub high_water: f64,
    /// Tradable days held so far, the entry day included once processed.
    pub days_held: u32,
}

impl ExitState {
    pub fn new(entry_price: f64) -> Self {
        Self { entry_price, high_water: 0.0, days_held: 0 }
    }

    /// Runs the day's checks in priority order: trailing stop, stop-loss,
    /// profit-take, then the time stop at the close. Prices that gap through
    /// a level fill at the open. On the entry day the open is the fill
    /// itself, so only intraday touches count. The high-water mark is
    /// updated after the checks.
    pub fn step(&mut self, bar: &DailyBar, params: &ExitParams, entry_day: bool) -> Option<(f64, ExitReason)> {
        self.days_held += 1;
        let e = self.entry_price;
        let open = if entry_day { e } else { bar.open };

        if self.high_water >= params.trailing_activation {
            let level = e * (1.0 + self.high_water - params.stop_loss);
            if open <= level {
                return Some((open, ExitReason::TrailingStop));
            }
            if bar.low <= level {
                return Some((level, ExitReason::TrailingStop));
            }
        }
        let sl = e * (1.0 - params.stop_loss);
        if open <= sl {
            return Some((open, ExitReason::StopLoss));
        }
        if bar.low <= sl {
            return Some((sl, ExitReason::StopLoss));
        }
        let pt = e * (1.0 + params.profit_take);
        if open >= pt {
            return Some((open, ExitReason::ProfitTake));
        }
        if bar.high >= pt {
            return Some((pt, ExitReason::ProfitTake));
        }
        if self.days_held >= params.max_hold {
            return Some((bar.close, ExitReason::TimeStop));
        }
        self.high_water = self.high_water.max(bar.high / e - 1.0);
        None
    }
}
