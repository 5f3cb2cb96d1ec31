//! Report assembly, per-regime tables and the on-disk report set.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::costs::{Side, TradeCosts};
use super::engine::{ClosedTrade, DayRecord, EngineOutput, TradeRecord};
use super::metrics::{metrics_from_returns, MetricTable, TradeOutcome};
use super::pipeline::Prepared;
use super::BacktestError;
use crate::config::{ResolvedSplit, RunConfig};
use crate::exitgrid::{write_grid_csv, GridPoint, Regime, RegimeOptimum};
use crate::stats;

pub const REPORT_FILES: [&str; 6] =
    ["report.json", "equity_curve.csv", "trades.csv", "costs.csv", "regime_table.csv", "grid_objective.csv"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: String,
    pub n_days: usize,
    /// `None` when the regime has no days in the test span.
    pub metrics: Option<MetricTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub label: String,
    pub seed: u64,
    pub config: RunConfig,
    pub split: ResolvedSplit,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub initial_equity: f64,
    pub final_equity: f64,
    pub metrics: MetricTable,
    pub net_return: f64,
    /// Net return plus total costs over initial equity.
    pub gross_return: f64,
    pub costs: TradeCosts,
    pub total_costs: f64,
    /// Open versus prior close on entry fills, in bps of entry notional.
    /// Informational only, never charged.
    pub timing_cost_bps: Option<f64>,
    pub n_trades: usize,
    pub n_round_trips: usize,
    pub open_positions: usize,
    pub regime_table: Vec<RegimeRow>,
    pub exit_choice: Option<RegimeOptimum>,
    pub flags: BTreeMap<String, usize>,
    #[serde(skip)]
    pub days: Vec<DayRecord>,
    #[serde(skip)]
    pub trades: Vec<TradeRecord>,
    #[serde(skip)]
    pub closed: Vec<ClosedTrade>,
    #[serde(skip)]
    pub grid_points: Vec<GridPoint>,
    /// Regime label of each entry in `days`.
    #[serde(skip)]
    pub day_regimes: Vec<Option<usize>>,
}

fn sum_costs(trades: &[TradeRecord]) -> TradeCosts {
    let mut c = TradeCosts::default();
    for t in trades {
        c.commission += t.commission;
        c.stamp_tax += t.stamp_tax;
        c.spread_cost += t.spread_cost;
        c.impact_cost += t.impact_cost;
    }
    c
}

/// Metrics over the return days `k` (1-based indices into `days`) with
/// `mask[k]` set. Closed trades count toward the day they exit.
pub fn masked_metrics(days: &[DayRecord], closed: &[ClosedTrade], mask: &[bool], risk_free: f64) -> Option<MetricTable> {
    let mut returns = Vec::new();
    let mut capital = Vec::new();
    let mut notional = 0.0;
    let mut dates = std::collections::BTreeSet::new();
    for k in 1..days.len() {
        if !mask[k] {
            continue;
        }
        returns.push(days[k].equity / days[k - 1].equity - 1.0);
        capital.push(days[k - 1].equity);
        notional += days[k].traded_notional;
        dates.insert(days[k].date);
    }
    if returns.is_empty() {
        return None;
    }
    let trades: Vec<TradeOutcome> = closed
        .iter()
        .filter(|c| dates.contains(&c.exit_date))
        .map(|c| TradeOutcome { net_pnl: c.net_pnl, holding_days: c.holding_days })
        .collect();
    let mean_equity = stats::mean(&capital).expect("non-empty");
    Some(metrics_from_returns(&returns, &trades, risk_free, notional, mean_equity))
}

/// Per-regime metric rows. `regimes[k]` labels `days[k]`; the first entry
/// (the starting close) carries no return and is ignored. Days without a
/// label form an `unlabeled` row when present.
pub fn regime_report(days: &[DayRecord], closed: &[ClosedTrade], regimes: &[Option<usize>], risk_free: f64) -> (Vec<RegimeRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    let mut groups: Vec<(String, Option<usize>)> = Regime::ALL.iter().map(|r| (r.name().to_string(), Some(r.index()))).collect();
    if regimes.iter().skip(1).any(|r| r.is_none()) {
        groups.push(("unlabeled".into(), None));
    }
    for (name, label) in groups {
        let mask: Vec<bool> = (0..days.len()).map(|k| k > 0 && regimes.get(k).copied().flatten() == label).collect();
        let n_days = mask.iter().filter(|m| **m).count();
        let metrics = masked_metrics(days, closed, &mask, risk_free);
        if metrics.is_none() {
            flags.push(format!("regime_{name}_empty"));
        }
        rows.push(RegimeRow { regime: name, n_days, metrics });
    }
    (rows, flags)
}

impl BacktestReport {
    pub(super) fn assemble(label: &str, cfg: &RunConfig, prep: &Prepared<'_>, out: EngineOutput) -> Self {
        let panel = prep.panel;
        let days = out.days;
        let initial_equity = days[0].equity;
        let final_equity = days.last().expect("non-empty").equity;
        let all: Vec<bool> = (0..days.len()).map(|k| k > 0).collect();
        let rf = cfg.backtest.risk_free;
        let metrics = masked_metrics(&days, &out.closed, &all, rf).expect("at least one return day");
        let costs = sum_costs(&out.trades);
        let total_costs = costs.total();
        let net_return = final_equity / initial_equity - 1.0;

        let mut slip = 0.0;
        let mut entry_notional = 0.0;
        let index: BTreeMap<_, _> = panel.instruments().iter().enumerate().map(|(i, id)| (id, i)).collect();
        for t in out.trades.iter().filter(|t| t.side == Side::Buy) {
            let day = panel.day_index(t.date).expect("trade on calendar");
            if let Some(prev) = day.checked_sub(1).and_then(|d| panel.close(d, index[&t.instrument])) {
                slip += t.shares * (t.price - prev);
                entry_notional += t.notional();
            }
        }
        let timing_cost_bps = (entry_notional > 0.0).then(|| slip / entry_notional * 1e4);

        let day_regimes: Vec<Option<usize>> = days.iter().map(|d| prep.regimes[d.day]).collect();
        let (regime_table, regime_flags) = regime_report(&days, &out.closed, &day_regimes, rf);
        let mut flags = prep.flags.clone();
        for f in regime_flags.into_iter().chain(days.iter().flat_map(|d| d.decision.flags.iter().cloned())) {
            *flags.entry(f).or_default() += 1;
        }
        let deferred: usize = days.iter().map(|d| d.deferred).sum();
        if deferred > 0 {
            flags.insert("orders_deferred".into(), deferred);
        }
        let gaps = out.closed.iter().filter(|c| c.gap_flag).count();
        if gaps > 0 {
            flags.insert("exits_after_suspension".into(), gaps);
        }
        let grid_on = cfg.modules.grid;
        BacktestReport {
            label: label.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            split: prep.split,
            start_date: days[0].date,
            end_date: days.last().expect("non-empty").date,
            initial_equity,
            final_equity,
            metrics,
            net_return,
            gross_return: net_return + total_costs / initial_equity,
            costs,
            total_costs,
            timing_cost_bps,
            n_trades: out.trades.len(),
            n_round_trips: out.closed.len(),
            open_positions: out.final_state.positions.len(),
            regime_table,
            exit_choice: if grid_on { prep.grid.as_ref().map(|g| g.optimum.clone()) } else { None },
            flags,
            days,
            trades: out.trades,
            closed: out.closed,
            grid_points: if grid_on { prep.grid.as_ref().map(|g| g.points.clone()).unwrap_or_default() } else { Vec::new() },
            day_regimes,
        }
    }

    pub fn equity_curve(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.equity).collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes the six report files into `dir`, creating it if needed.
pub fn write_report(report: &BacktestReport, dir: &Path) -> Result<(), BacktestError> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;

    let mut w = csv::Writer::from_path(dir.join("equity_curve.csv"))?;
    w.write_record(["date", "equity", "cash", "gross_exposure", "n_positions", "pnl", "costs", "traded_notional", "regime", "exposure_multiplier"])?;
    for (d, r) in report.days.iter().zip(&report.day_regimes) {
        w.write_record([
            d.date.to_string(),
            d.equity.to_string(),
            d.cash.to_string(),
            d.gross_exposure.to_string(),
            d.n_positions.to_string(),
            d.pnl.to_string(),
            d.costs.total().to_string(),
            d.traded_notional.to_string(),
            r.map_or_else(String::new, |r| Regime::from_index(r).name().to_string()),
            d.decision.exposure_multiplier.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("trades.csv"))?;
    w.write_record(["date", "instrument", "side", "shares", "price", "commission", "stamp_tax", "spread_cost", "impact_cost", "reason"])?;
    for t in &report.trades {
        w.write_record([
            t.date.to_string(),
            t.instrument.to_string(),
            format!("{:?}", t.side).to_lowercase(),
            t.shares.to_string(),
            t.price.to_string(),
            t.commission.to_string(),
            t.stamp_tax.to_string(),
            t.spread_cost.to_string(),
            t.impact_cost.to_string(),
            format!("{:?}", t.reason),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("costs.csv"))?;
    w.write_record(["component", "amount", "bps_of_initial_equity"])?;
    let c = &report.costs;
    for (name, v) in [
        ("commission", c.commission),
        ("stamp_tax", c.stamp_tax),
        ("spread", c.spread_cost),
        ("impact", c.impact_cost),
        ("total", report.total_costs),
    ] {
        w.write_record([name.to_string(), v.to_string(), (v / report.initial_equity * 1e4).to_string()])?;
    }
    w.write_record(["timing_residual_bps_uncharged".to_string(), String::new(), opt(report.timing_cost_bps)])?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("regime_table.csv"))?;
    w.write_record(["regime", "n_days", "annual_return", "annual_volatility", "sharpe", "max_drawdown", "win_rate"])?;
    for r in &report.regime_table {
        let m = r.metrics.as_ref();
        w.write_record([
            r.regime.clone(),
            r.n_days.to_string(),
            opt(m.map(|m| m.annual_return)),
            opt(m.map(|m| m.annual_volatility)),
            opt(m.and_then(|m| m.sharpe)),
            opt(m.map(|m| m.max_drawdown)),
            opt(m.and_then(|m| m.win_rate)),
        ])?;
    }
    w.flush()?;

    let f = fs::File::create(dir.join("grid_objective.csv"))?;
    let mut f = std::io::BufWriter::new(f);
    write_grid_csv(&report.grid_points, &mut f).map_err(|e| BacktestError::Config(e.to_string()))?;
    f.flush()?;
    Ok(())
}
