use std::collections::VecDeque;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::stats;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressIndex {
    pub date: NaiveDate,
    /// Annualized cross-sectional mean volatility.
    pub level: f64,
    pub zscore: f64,
    /// Set when the trailing stdev was zero or history too short, forcing z = 0.
    pub degenerate: bool,
}

/// Annualized cross-sectional mean of daily volatilities.
pub fn stress_level(vols: &[f64]) -> Option<f64> {
    stats::mean(vols).map(|m| m * TRADING_DAYS.sqrt())
}

/// Z-score of `level` against `history` (trailing levels, most recent last).
/// Only the last `window` entries are used; fewer than `min_history` or a
/// zero stdev gives `(0, true)`.
pub fn stress_zscore(level: f64, history: &[f64], window: usize, min_history: usize) -> (f64, bool) {
    let tail = &history[history.len().saturating_sub(window)..];
    if tail.len() < min_history.max(2) {
        return (0.0, true);
    }
    let mean = stats::mean(tail).expect("non-empty");
    let sd = stats::std_sample(tail).expect("two or more");
    // rounding leaves a tiny spread on constant histories
    if !(sd > 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) {
        return (0.0, true);
    }
    ((level - mean) / sd, false)
}

pub fn stress_index(date: NaiveDate, vols: &[f64], history: &[f64], window: usize) -> Option<StressIndex> {
    let level = stress_level(vols)?;
    let (zscore, degenerate) = stress_zscore(level, history, window, 20.min(window));
    Some(StressIndex { date, level, zscore, degenerate })
}

/// Rolling tracker that keeps the trailing window of levels.
#[derive(Debug, Clone)]
pub struct StressTracker {
    window: usize,
    min_history: usize,
    history: VecDeque<f64>,
}

impl StressTracker {
    pub fn new(window: usize, min_history: usize) -> Self {
        Self { window, min_history, history: VecDeque::with_capacity(window + 1) }
    }

    pub fn push(&mut self, date: NaiveDate, vols: &[f64]) -> Option<StressIndex> {
        let level = stress_level(vols)?;
        let hist: Vec<f64> = self.history.iter().copied().collect();
        let (zscore, degenerate) = stress_zscore(level, &hist, self.window, self.min_history);
        self.history.push_back(level);
        if self.history.len() > self.window {
            self.history.pop_front();
        }
        Some(StressIndex { date, level, zscore, degenerate })
    }
}
