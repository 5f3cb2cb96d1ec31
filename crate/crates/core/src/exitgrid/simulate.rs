use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::grid::ExitParams;
use super::rules::{ExitReason, ExitState};
use crate::marketdata::Panel;

/// Round-trip cost in return units applied to simulated trades:
/// commission both sides, sell-side stamp tax and spread both sides.
pub const GRID_ROUND_TRIP_COST: f64 = (5.0 + 5.0 + 10.0 + 2.1 + 2.1) * 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub instrument: usize,
    pub entry_day: usize,
    pub entry_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrade {
    pub instrument: usize,
    pub entry_day: usize,
    pub exit_day: usize,
    pub exit_date: NaiveDate,
    pub entry_price: f64,
    pub exit_price: f64,
    pub gross_return: f64,
    pub net_return: f64,
    pub holding_days: u32,
    pub reason: ExitReason,
    /// Held through at least one day without a tradable bar.
    pub gap_flag: bool,
}

/// Applies the exit rules to each entry; positions still open at the end of
/// the panel are dropped. `cost` is subtracted from each gross return.
pub fn simulate_exits(entries: &[EntryRecord], panel: &Panel, params: &ExitParams, cost: f64) -> Vec<SimTrade> {
    let mut out = Vec::with_capacity(entries.len());
    for en in entries {
        let mut st = ExitState::new(en.entry_price);
        let mut gap_flag = false;
        for day in en.entry_day..panel.n_days() {
            let Some(bar) = panel.bar(day, en.instrument).filter(|b| b.is_tradable()) else {
                gap_flag = true;
                continue;
            };
            if let Some((price, reason)) = st.step(bar, params, day == en.entry_day) {
                let gross = price / en.entry_price - 1.0;
                out.push(SimTrade {
                    instrument: en.instrument,
                    entry_day: en.entry_day,
                    exit_day: day,
                    exit_date: panel.calendar()[day],
                    entry_price: en.entry_price,
                    exit_price: price,
                    gross_return: gross,
                    net_return: gross - cost,
                    holding_days: st.days_held,
                    reason,
                    gap_flag,
                });
                break;
            }
        }
    }
    out
}
