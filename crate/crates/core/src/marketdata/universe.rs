use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, InstrumentId, Panel, Status};

/// Universe filter thresholds. Defaults follow the production rule set:
/// 500m market cap, 10m mean daily turnover over 20 days, one year of history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniverseRules {
    pub min_market_cap: f64,
    pub min_avg_turnover: f64,
    pub turnover_window: usize,
    pub min_history: usize,
    /// Instruments with an absolute one-day return above this level within
    /// `extreme_window` days are excluded.
    pub max_abs_return: f64,
    pub extreme_window: usize,
}

impl Default for UniverseRules {
    fn default() -> Self {
        Self {
            min_market_cap: 5e8,
            min_avg_turnover: 1e7,
            turnover_window: 20,
            min_history: 252,
            max_abs_return: 0.30,
            extreme_window: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseSnapshot {
    pub date: NaiveDate,
    /// Sorted member identifiers.
    pub members: Vec<InstrumentId>,
    /// Panel instrument indices of the members, same order as `members`.
    #[serde(skip)]
    pub indices: Vec<usize>,
}

impl UniverseSnapshot {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, id: &InstrumentId) -> bool {
        self.members.binary_search(id).is_ok()
    }
}

pub fn build_universe(panel: &Panel, date: NaiveDate, rules: &UniverseRules) -> Result<UniverseSnapshot, DataError> {
    let day = panel.day_index(date).ok_or(DataError::Lookup(date))?;
    Ok(build_universe_at(panel, day, rules))
}

/// Universe on calendar day `day`; reads only bars dated on or before it.
pub fn build_universe_at(panel: &Panel, day: usize, rules: &UniverseRules) -> UniverseSnapshot {
    let mut indices = Vec::new();
    'inst: for inst in 0..panel.n_instruments() {
        let Some(bar) = panel.bar(day, inst) else { continue };
        if bar.status != Status::Normal || bar.market_cap < rules.min_market_cap {
            continue;
        }
        if panel.history_before(inst, day) < rules.min_history {
            continue;
        }
        let w = rules.turnover_window.max(1);
        if day + 1 < w {
            continue;
        }
        let mut total = 0.0;
        for d in day + 1 - w..=day {
            match panel.bar(d, inst) {
                Some(b) => total += b.turnover,
                None => continue 'inst,
            }
        }
        if total / (w as f64) < rules.min_avg_turnover {
            continue;
        }
        let ew = rules.extreme_window.min(day);
        for d in day + 1 - ew..=day {
            if let Some(r) = panel.return_at(d, inst) {
                if r.abs() > rules.max_abs_return {
                    continue 'inst;
                }
            }
        }
        indices.push(inst);
    }
    let members = indices.iter().map(|&i| panel.instruments()[i].clone()).collect();
    UniverseSnapshot { date: panel.calendar()[day], members, indices }
}
