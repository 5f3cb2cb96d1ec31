//! Position accounting and the daily execution loop.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::costs::{apply_costs, CostModel, FillIntent, Side, TradeCosts};
use super::BacktestError;
use crate::exitgrid::{ExitParams, ExitReason, ExitState};
use crate::marketdata::{InstrumentId, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TradeReason {
    Entry,
    ProfitTake,
    StopLoss,
    TrailingStop,
    TimeStop,
    /// Reserved. The timing filter only blocks new entries, so the engine
    /// never emits it.
    TimingExit,
}

impl From<ExitReason> for TradeReason {
    fn from(r: ExitReason) -> Self {
        match r {
            ExitReason::ProfitTake => TradeReason::ProfitTake,
            ExitReason::StopLoss => TradeReason::StopLoss,
            ExitReason::TrailingStop => TradeReason::TrailingStop,
            ExitReason::TimeStop => TradeReason::TimeStop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub instrument: InstrumentId,
    pub side: Side,
    pub date: NaiveDate,
    pub shares: f64,
    pub price: f64,
    pub commission: f64,
    pub stamp_tax: f64,
    pub impact_cost: f64,
    pub spread_cost: f64,
    pub reason: TradeReason,
}

impl TradeRecord {
    pub fn notional(&self) -> f64 {
        self.shares * self.price
    }

    pub fn total_cost(&self) -> f64 {
        self.commission + self.stamp_tax + self.impact_cost + self.spread_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub instrument: usize,
    pub shares: f64,
    pub entry_date: NaiveDate,
    pub entry_day: usize,
    pub entry_price: f64,
    pub entry_cost: f64,
    /// Exit rules locked at entry.
    pub params: ExitParams,
    pub exit: ExitState,
    /// Last close seen, used for marking through suspensions.
    pub mark: f64,
    pub gap_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub date: NaiveDate,
    pub day: usize,
    pub cash: f64,
    pub positions: BTreeMap<InstrumentId, Position>,
    pub equity: f64,
}

impl PortfolioState {
    pub fn new(panel: &Panel, day: usize, cash: f64) -> Self {
        Self { date: panel.calendar()[day], day, cash, positions: BTreeMap::new(), equity: cash }
    }

    pub fn market_value(&self) -> f64 {
        self.positions.values().map(|p| p.shares * p.mark).sum()
    }
}

/// Buy order filled at the next open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOrder {
    pub instrument: usize,
    pub notional: f64,
    pub params: ExitParams,
}

/// Liquidity inputs for the impact term, known at the close of `day`.
pub trait Liquidity {
    /// (average daily volume in shares, daily volatility)
    fn at(&self, day: usize, inst: usize) -> (f64, f64);
}

/// Same liquidity for every instrument and day.
#[derive(Debug, Clone, Copy)]
pub struct ConstantLiquidity {
    pub adv_shares: f64,
    pub volatility: f64,
}

impl Liquidity for ConstantLiquidity {
    fn at(&self, _day: usize, _inst: usize) -> (f64, f64) {
        (self.adv_shares, self.volatility)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedTrade {
    pub instrument: InstrumentId,
    pub entry_date: NaiveDate,
    pub exit_date: NaiveDate,
    pub shares: f64,
    pub entry_price: f64,
    pub exit_price: f64,
    pub holding_days: u32,
    pub max_hold: u32,
    pub reason: TradeReason,
    /// Price P&L less entry and exit costs.
    pub net_pnl: f64,
    pub gap_flag: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub trades: Vec<TradeRecord>,
    pub closed: Vec<ClosedTrade>,
    /// Price P&L of all positions over the day, before costs.
    pub pnl: f64,
    pub costs: TradeCosts,
    pub traded_notional: f64,
    /// Orders not filled because the instrument had no tradable bar.
    pub deferred: usize,
}

fn add_costs(acc: &mut TradeCosts, c: &TradeCosts) {
    acc.commission += c.commission;
    acc.stamp_tax += c.stamp_tax;
    acc.spread_cost += c.spread_cost;
    acc.impact_cost += c.impact_cost;
}

/// Executes day `day`: exit checks on held positions, then pending entries
/// at the open (with their own entry-day exit checks), then marks at the close.
pub fn daily_rebalance(
    state: &mut PortfolioState,
    panel: &Panel,
    day: usize,
    orders: &[EntryOrder],
    model: &CostModel,
    liquidity: &dyn Liquidity,
    lot_size: f64,
) -> Result<DayOutcome, BacktestError> {
    if day <= state.day || day >= panel.n_days() {
        return Err(BacktestError::Order(format!("day {day} is not after state day {}", state.day)));
    }
    let date = panel.calendar()[day];
    let mut out = DayOutcome::default();
    let info_day = day.saturating_sub(1);

    // Held positions settle first so their proceeds fund the new entries.
    let held: Vec<InstrumentId> = state.positions.keys().cloned().collect();
    check_exits(state, panel, day, held, model, liquidity, &mut out)?;

    for o in orders {
        let id = &panel.instruments()[o.instrument];
        if state.positions.contains_key(id) || !(o.notional > 0.0) {
            continue;
        }
        let Some(bar) = panel.bar(day, o.instrument).filter(|b| b.is_tradable()) else {
            out.deferred += 1;
            continue;
        };
        let price = bar.open;
        let (adv, vol) = liquidity.at(info_day, o.instrument);
        let mut shares = (o.notional / price / lot_size).floor() * lot_size;
        let mut costs = TradeCosts::default();
        while shares >= lot_size {
            let intent = FillIntent { side: Side::Buy, shares, price, adv_shares: adv, volatility: vol };
            costs = apply_costs(&intent, model)?;
            if shares * price + costs.total() <= state.cash {
                break;
            }
            let rate = costs.total() / (shares * price);
            let fit = (state.cash / (price * (1.0 + rate)) / lot_size).floor() * lot_size;
            shares = if fit < shares { fit } else { shares - lot_size };
        }
        if shares < lot_size {
            continue;
        }
        let notional = shares * price;
        state.cash -= notional + costs.total();
        add_costs(&mut out.costs, &costs);
        out.traded_notional += notional;
        out.trades.push(TradeRecord {
            instrument: id.clone(),
            side: Side::Buy,
            date,
            shares,
            price,
            commission: costs.commission,
            stamp_tax: costs.stamp_tax,
            impact_cost: costs.impact_cost,
            spread_cost: costs.spread_cost,
            reason: TradeReason::Entry,
        });
        state.positions.insert(
            id.clone(),
            Position {
                instrument: o.instrument,
                shares,
                entry_date: date,
                entry_day: day,
                entry_price: price,
                entry_cost: costs.total(),
                params: o.params,
                exit: ExitState::new(price),
                mark: price,
                gap_flag: false,
            },
        );
    }

    let fresh: Vec<InstrumentId> =
        state.positions.iter().filter(|(_, p)| p.entry_day == day).map(|(k, _)| k.clone()).collect();
    check_exits(state, panel, day, fresh, model, liquidity, &mut out)?;
    state.day = day;
    state.date = date;
    state.equity = state.cash + state.market_value();
    Ok(out)
}

/// Intraday exit checks on the given positions.
#[allow(clippy::too_many_arguments)]
fn check_exits(
    state: &mut PortfolioState,
    panel: &Panel,
    day: usize,
    ids: Vec<InstrumentId>,
    model: &CostModel,
    liquidity: &dyn Liquidity,
    out: &mut DayOutcome,
) -> Result<(), BacktestError> {
    let date = panel.calendar()[day];
    let info_day = day.saturating_sub(1);
    for id in ids {
        let pos = state.positions.get_mut(&id).expect("key present");
        let Some(bar) = panel.bar(day, pos.instrument).filter(|b| b.is_tradable()) else {
            pos.gap_flag = true;
            continue;
        };
        match pos.exit.step(bar, &pos.params, pos.entry_day == day) {
            None => {
                out.pnl += (bar.close - pos.mark) * pos.shares;
                pos.mark = bar.close;
            }
            Some((price, reason)) => {
                let pos = state.positions.remove(&id).expect("key present");
                out.pnl += (price - pos.mark) * pos.shares;
                let (adv, vol) = liquidity.at(info_day, pos.instrument);
                let intent = FillIntent { side: Side::Sell, shares: pos.shares, price, adv_shares: adv, volatility: vol };
                let costs = apply_costs(&intent, model)?;
                let notional = pos.shares * price;
                state.cash += notional - costs.total();
                add_costs(&mut out.costs, &costs);
                out.traded_notional += notional;
                out.trades.push(TradeRecord {
                    instrument: id.clone(),
                    side: Side::Sell,
                    date,
                    shares: pos.shares,
                    price,
                    commission: costs.commission,
                    stamp_tax: costs.stamp_tax,
                    impact_cost: costs.impact_cost,
                    spread_cost: costs.spread_cost,
                    reason: reason.into(),
                });
                out.closed.push(ClosedTrade {
                    instrument: id,
                    entry_date: pos.entry_date,
                    exit_date: date,
                    shares: pos.shares,
                    entry_price: pos.entry_price,
                    exit_price: price,
                    holding_days: pos.exit.days_held,
                    max_hold: pos.params.max_hold,
                    reason: reason.into(),
                    net_pnl: (price - pos.entry_price) * pos.shares - pos.entry_cost - costs.total(),
                    gap_flag: pos.gap_flag,
                });
            }
        }
    }
    Ok(())
}

/// What the strategy reports alongside its orders.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionMeta {
    pub regime: Option<usize>,
    pub exposure_multiplier: f64,
    pub exit_params: Option<ExitParams>,
    /// Candidates in priority order with their scores.
    pub candidates: Vec<(InstrumentId, f64)>,
    /// Target weights after sizing and timing.
    pub targets: BTreeMap<InstrumentId, f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub orders: Vec<EntryOrder>,
    pub meta: DecisionMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub day: usize,
    pub equity: f64,
    pub cash: f64,
    pub gross_exposure: f64,
    pub n_positions: usize,
    pub pnl: f64,
    pub costs: TradeCosts,
    pub traded_notional: f64,
    pub deferred: usize,
    /// Decision taken at this day's close.
    pub decision: DecisionMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOutput {
    pub days: Vec<DayRecord>,
    pub trades: Vec<TradeRecord>,
    pub closed: Vec<ClosedTrade>,
    pub final_state: PortfolioState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub initial_equity: f64,
    pub lot_size: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { initial_equity: 1e7, lot_size: 1.0 }
    }
}

/// Runs the loop from the close of `start` to the close of `end`. The
/// strategy decides at each close; its orders fill at the next open.
pub fn run_engine<F>(
    panel: &Panel,
    start: usize,
    end: usize,
    cfg: &EngineConfig,
    model: &CostModel,
    liquidity: &dyn Liquidity,
    mut strategy: F,
) -> Result<EngineOutput, BacktestError>
where
    F: FnMut(usize, &PortfolioState) -> Decision,
{
    if start >= end || end >= panel.n_days() {
        return Err(BacktestError::Config(format!("invalid engine span {start}..={end} for {} days", panel.n_days())));
    }
    model.validate()?;
    let mut state = PortfolioState::new(panel, start, cfg.initial_equity);
    let mut days = Vec::with_capacity(end - start + 1);
    let mut trades = Vec::new();
    let mut closed = Vec::new();
    let mut decision = strategy(start, &state);
    days.push(DayRecord {
        date: state.date,
        day: start,
        equity: state.equity,
        cash: state.cash,
        gross_exposure: 0.0,
        n_positions: 0,
        pnl: 0.0,
        costs: TradeCosts::default(),
        traded_notional: 0.0,
        deferred: 0,
        decision: decision.meta.clone(),
    });
    for day in start + 1..=end {
        let out = daily_rebalance(&mut state, panel, day, &decision.orders, model, liquidity, cfg.lot_size)?;
        // The final decision is recorded but never filled.
        decision = strategy(day, &state);
        days.push(DayRecord {
            date: state.date,
            day,
            equity: state.equity,
            cash: state.cash,
            gross_exposure: state.market_value() / state.equity,
            n_positions: state.positions.len(),
            pnl: out.pnl,
            costs: out.costs,
            traded_notional: out.traded_notional,
            deferred: out.deferred,
            decision: decision.meta.clone(),
        });
        trades.extend(out.trades);
        closed.extend(out.closed);
    }
    Ok(EngineOutput { days, trades, closed, final_state: state })
}
