use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::ExitParams;
use super::hmm::N_STATES;
use super::objective::{evaluate_objective, ObjectiveBreakdown, ObjectiveWeights};
use super::simulate::{simulate_exits, EntryRecord, SimTrade};
use super::ExitError;
use crate::marketdata::Panel;

pub const MIN_REGIME_DAYS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEvalConfig {
    /// Equity fraction per simulated trade.
    pub slot: f64,
    /// Round-trip cost subtracted from each trade.
    pub cost: f64,
}

impl Default for GridEvalConfig {
    fn default() -> Self {
        Self { slot: super::objective::DEFAULT_SLOT_FRACTION, cost: super::simulate::GRID_ROUND_TRIP_COST }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub params: ExitParams,
    pub global: Option<ObjectiveBreakdown>,
    pub per_regime: [Option<ObjectiveBreakdown>; N_STATES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeOptimum {
    pub global: ExitParams,
    pub global_value: f64,
    pub per_regime: [ExitParams; N_STATES],
    pub values: [Option<f64>; N_STATES],
    /// Regime fell back to the global optimum.
    pub inherited: [bool; N_STATES],
    pub regime_days: [usize; N_STATES],
}

/// Evaluates every grid point, in parallel, keeping grid order in the output.
/// `regimes[day]` labels the days of the training span; entries on unlabeled
/// days count only toward the global objective.
pub fn evaluate_grid(
    panel: &Panel,
    entries: &[EntryRecord],
    grid: &[ExitParams],
    weights: &ObjectiveWeights,
    regimes: &[Option<usize>],
    cfg: &GridEvalConfig,
) -> Vec<GridPoint> {
    grid.par_iter()
        .map(|p| {
            let trades = simulate_exits(entries, panel, p, cfg.cost);
            let per_regime = std::array::from_fn(|r| {
                let sub: Vec<SimTrade> =
                    trades.iter().filter(|t| regimes.get(t.entry_day).copied().flatten() == Some(r)).cloned().collect();
                evaluate_objective(&sub, weights, cfg.slot)
            });
            GridPoint { params: *p, global: evaluate_objective(&trades, weights, cfg.slot), per_regime }
        })
        .collect()
}

/// Index of the first strict maximum, so ties go to the earliest point.
fn argmax(values: impl Iterator<Item = Option<f64>>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best
}

/// Picks the best grid point globally and per regime. Regimes with fewer than
/// `MIN_REGIME_DAYS` labeled days, or without any closed trade, inherit the
/// global optimum.
pub fn select_per_regime(points: &[GridPoint], regimes: &[Option<usize>]) -> Result<RegimeOptimum, ExitError> {
    let (gi, gv) = argmax(points.iter().map(|p| p.global.map(|b| b.value)))
        .ok_or_else(|| ExitError::Unavailable("no grid point produced a closed trade".into()))?;
    let global = points[gi].params;
    let mut regime_days = [0usize; N_STATES];
    for r in regimes.iter().flatten() {
        if *r < N_STATES {
            regime_days[*r] += 1;
        }
    }
    let mut per_regime = [global; N_STATES];
    let mut values = [None; N_STATES];
    let mut inherited = [true; N_STATES];
    for r in 0..N_STATES {
        if regime_days[r] < MIN_REGIME_DAYS {
            continue;
        }
        if let Some((i, v)) = argmax(points.iter().map(|p| p.per_regime[r].map(|b| b.value))) {
            per_regime[r] = points[i].params;
            values[r] = Some(v);
            inherited[r] = false;
        }
    }
    Ok(RegimeOptimum { global, global_value: gv, per_regime, values, inherited, regime_days })
}

pub fn optimize_per_regime(
    panel: &Panel,
    entries: &[EntryRecord],
    grid: &[ExitParams],
    weights: &ObjectiveWeights,
    regimes: &[Option<usize>],
    cfg: &GridEvalConfig,
) -> Result<(Vec<GridPoint>, RegimeOptimum), ExitError> {
    if grid.is_empty() {
        return Err(ExitError::Config("empty grid".into()));
    }
    let points = evaluate_grid(panel, entries, grid, weights, regimes, cfg);
    let best = select_per_regime(&points, regimes)?;
    Ok((points, best))
}

/// One row per grid point with the global breakdown and per-regime values.
pub fn write_grid_csv<W: Write>(points: &[GridPoint], writer: W) -> Result<(), ExitError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "profit_take",
        "stop_loss",
        "max_hold",
        "trailing_activation",
        "n_trades",
        "win_rate",
        "return_drawdown",
        "turnover_efficiency",
        "consistency",
        "objective",
        "objective_lowvol",
        "objective_normalvol",
        "objective_highvol",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        let g = p.global.as_ref();
        w.write_record([
            p.params.profit_take.to_string(),
            p.params.stop_loss.to_string(),
            p.params.max_hold.to_string(),
            p.params.trailing_activation.to_string(),
            g.map(|b| b.n_trades).unwrap_or(0).to_string(),
            opt(g.map(|b| b.win_rate)),
            opt(g.map(|b| b.return_drawdown)),
            opt(g.map(|b| b.turnover_efficiency)),
            opt(g.map(|b| b.consistency)),
            opt(g.map(|b| b.value)),
            opt(p.per_regime[0].map(|b| b.value)),
            opt(p.per_regime[1].map(|b| b.value)),
            opt(p.per_regime[2].map(|b| b.value)),
        ])?;
    }
    w.flush().map_err(|e| ExitError::Io(e.to_string()))?;
    Ok(())
}
