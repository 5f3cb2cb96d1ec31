mod common;

use std::collections::BTreeMap;

use common::{bar, d0, path_panel, weekdays};
use turnover::backtest::*;
use turnover::exitgrid::ExitParams;
use turnover::marketdata::{InstrumentId, Panel};
use turnover::sizing::PortfolioWeights;
use turnover::timing::{apply_timing_filter, TimingSignal};
use turnover::RunConfig;

fn sell(shares: f64, price: f64) -> FillIntent {
    FillIntent { side: Side::Sell, shares, price, adv_shares: 1e9, volatility: 0.0 }
}

#[test]
fn sell_of_one_million_pays_stamp_tax_of_one_thousand() {
    let c = apply_costs(&sell(100_000.0, 10.0), &CostModel::default()).unwrap();
    assert!((c.stamp_tax - 1000.0).abs() < 1e-9);
    assert!((c.commission - 500.0).abs() < 1e-9);
    assert!((c.spread_cost - 210.0).abs() < 1e-9);
}

#[test]
fn buy_pays_commission_but_no_stamp_tax() {
    let intent = FillIntent { side: Side::Buy, ..sell(100_000.0, 10.0) };
    let c = apply_costs(&intent, &CostModel::default()).unwrap();
    assert_eq!(c.stamp_tax, 0.0);
    assert!((c.commission - 500.0).abs() < 1e-9);
    let both = CostModel { stamp_side: StampSide::Both, ..CostModel::default() };
    assert!((apply_costs(&intent, &both).unwrap().stamp_tax - 1000.0).abs() < 1e-9);
}

#[test]
fn zero_notional_is_rejected() {
    assert!(matches!(apply_costs(&sell(0.0, 10.0), &CostModel::default()), Err(BacktestError::Order(_))));
}

#[test]
fn market_impact_examples() {
    assert_eq!(market_impact(0.0, 1e6, 0.02, Side::Buy), 0.0);
    assert!((market_impact(1e6, 1e6, 0.02, Side::Buy) - 0.01).abs() < 1e-15);
    let one = market_impact(1e4, 1e6, 0.02, Side::Sell);
    let four = market_impact(4e4, 1e6, 0.02, Side::Sell);
    assert!(one < 0.0);
    assert!((four / one - 2.0).abs() < 1e-12);
    // charged adversely on both sides
    let buy = apply_costs(&FillIntent { side: Side::Buy, shares: 1e4, price: 5.0, adv_shares: 1e6, volatility: 0.02 }, &CostModel::zero_but_impact());
    let sel = apply_costs(&FillIntent { side: Side::Sell, shares: 1e4, price: 5.0, adv_shares: 1e6, volatility: 0.02 }, &CostModel::zero_but_impact());
    assert!(buy.unwrap().impact_cost > 0.0 && sel.unwrap().impact_cost > 0.0);
}

trait ImpactOnly {
    fn zero_but_impact() -> CostModel;
}

impl ImpactOnly for CostModel {
    fn zero_but_impact() -> CostModel {
        CostModel { impact_coefficient: 0.5, ..CostModel::zero() }
    }
}

fn one_order(panel: &Panel, inst: usize, notional: f64, params: ExitParams) -> impl FnMut(usize, &PortfolioState) -> Decision + '_ {
    let _ = panel;
    move |day, _| {
        let orders = if day == 0 { vec![EntryOrder { instrument: inst, notional, params }] } else { Vec::new() };
        Decision { orders, meta: DecisionMeta::default() }
    }
}

#[test]
fn three_day_ledger_matches_hand_computation() {
    let panel = path_panel(
        "A",
        &[(10.0, 10.0, 10.0, 10.0), (10.0, 10.1, 9.95, 10.05), (10.05, 10.2, 10.0, 10.15), (10.2, 10.4, 10.15, 10.35)],
        1e6,
    );
    let liq = ConstantLiquidity { adv_shares: 1e6, volatility: 0.02 };
    let cfg = EngineConfig { initial_equity: 100_000.0, lot_size: 1.0 };
    let out =
        run_engine(&panel, 0, 3, &cfg, &CostModel::default(), &liq, one_order(&panel, 0, 10_000.0, ExitParams::default())).unwrap();
    // Buy 1000 @ 10: commission 5, spread 2.10, impact 0.5*sqrt(1e-3)*0.02*10000 = 3.16
    // Sell 1000 @ 10.30 (profit take): commission 5.15, stamp 10.30, spread 2.163, impact 3.26
    let cents = |x: f64| (x * 100.0).round() / 100.0;
    let eq: Vec<f64> = out.days.iter().map(|d| cents(d.equity)).collect();
    assert_eq!(eq, vec![100_000.00, 100_039.74, 100_139.74, 100_268.87]);
    let cash: Vec<f64> = out.days.iter().map(|d| cents(d.cash)).collect();
    assert_eq!(cash, vec![100_000.00, 89_989.74, 89_989.74, 100_268.87]);
    assert_eq!(out.trades.len(), 2);
    let (b, s) = (&out.trades[0], &out.trades[1]);
    assert_eq!((b.shares, b.price, b.reason), (1000.0, 10.0, TradeReason::Entry));
    assert_eq!((s.shares, cents(s.price), s.reason), (1000.0, 10.30, TradeReason::ProfitTake));
    assert_eq!([cents(b.commission), cents(b.stamp_tax), cents(b.spread_cost), cents(b.impact_cost)], [5.0, 0.0, 2.10, 3.16]);
    assert_eq!([cents(s.commission), cents(s.stamp_tax), cents(s.spread_cost), cents(s.impact_cost)], [5.15, 10.30, 2.16, 3.26]);
    assert!(out.final_state.positions.is_empty());
}

#[test]
fn position_at_max_hold_is_time_stopped() {
    let flat: Vec<_> = (0..6).map(|_| (10.0, 10.0, 10.0, 10.0)).collect();
    let panel = path_panel("A", &flat, 1e6);
    let params = ExitParams { max_hold: 2, ..ExitParams::default() };
    let liq = ConstantLiquidity { adv_shares: 1e6, volatility: 0.0 };
    let out = run_engine(&panel, 0, 5, &EngineConfig::default(), &CostModel::zero(), &liq, one_order(&panel, 0, 1e5, params)).unwrap();
    assert_eq!(out.closed.len(), 1);
    let c = &out.closed[0];
    assert_eq!(c.reason, TradeReason::TimeStop);
    assert_eq!(c.holding_days, 2);
    assert_eq!(c.exit_date, panel.calendar()[2]);
}

#[test]
fn zero_timing_multiplier_blocks_entries_and_leaves_positions() {
    let date = d0();
    let pw = PortfolioWeights {
        date,
        weights: [(InstrumentId::new("A"), 0.02), (InstrumentId::new("B"), 0.01)].into_iter().collect(),
        flags: Default::default(),
        scale: 1.0,
    };
    // value -0.5 maps to multiplier 0
    let sig = TimingSignal::from_components(date, [-0.5, 0.0, 0.0], [1.0, 0.0, 0.0], false);
    assert_eq!(sig.exposure_multiplier, 0.0);
    let filtered = apply_timing_filter(&pw, &sig);
    assert!(filtered.weights.values().all(|w| *w == 0.0));

    // A held position with no exit triggered is untouched by a day with no orders.
    let flat: Vec<_> = (0..4).map(|_| (10.0, 10.0, 10.0, 10.0)).collect();
    let panel = path_panel("A", &flat, 1e6);
    let liq = ConstantLiquidity { adv_shares: 1e6, volatility: 0.0 };
    let mut state = PortfolioState::new(&panel, 0, 1e6);
    let order = EntryOrder { instrument: 0, notional: 1e5, params: ExitParams::default() };
    daily_rebalance(&mut state, &panel, 1, &[order], &CostModel::zero(), &liq, 1.0).unwrap();
    let before = state.positions.clone();
    let out = daily_rebalance(&mut state, &panel, 2, &[], &CostModel::zero(), &liq, 1.0).unwrap();
    assert!(out.trades.is_empty());
    assert_eq!(state.positions.keys().collect::<Vec<_>>(), before.keys().collect::<Vec<_>>());
    assert_eq!(state.positions[&InstrumentId::new("A")].shares, before[&InstrumentId::new("A")].shares);
}

#[test]
fn suspended_fill_is_deferred() {
    let dates = weekdays(d0(), 3);
    let mut bars = vec![bar("A", dates[0], 10.0, 10.0, 10.0, 10.0, 1e6)];
    bars.push(bar("A", dates[1], 10.0, 10.0, 10.0, 10.0, 0.0));
    bars.push(bar("A", dates[2], 10.0, 10.0, 10.0, 10.0, 1e6));
    let panel = Panel::with_calendar(dates, bars).unwrap();
    let mut state = PortfolioState::new(&panel, 0, 1e6);
    let order = EntryOrder { instrument: 0, notional: 1e5, params: ExitParams::default() };
    let liq = ConstantLiquidity { adv_shares: 1e6, volatility: 0.0 };
    let out = daily_rebalance(&mut state, &panel, 1, &[order], &CostModel::default(), &liq, 1.0).unwrap();
    assert_eq!(out.deferred, 1);
    assert!(state.positions.is_empty());
}

/// Five instruments on scripted paths, one entry each, all closed by the
/// time stop. With ample cash the share counts do not depend on costs, so
/// the zero-cost run is the gross oracle.
#[test]
fn gross_minus_net_equals_costs_over_initial_equity() {
    let dates = weekdays(d0(), 8);
    let mut bars = Vec::new();
    for (k, id) in ["A", "B", "C", "D", "E"].iter().enumerate() {
        for (t, &d) in dates.iter().enumerate() {
            let p = 10.0 + k as f64 + 0.01 * (t as f64) * if k % 2 == 0 { 1.0 } else { -1.0 };
            bars.push(bar(id, d, p, p, p, p, 1e6));
        }
    }
    let panel = Panel::with_calendar(dates, bars).unwrap();
    let params = ExitParams { max_hold: 3, ..ExitParams::default() };
    let liq = ConstantLiquidity { adv_shares: 2e5, volatility: 0.02 };
    let cfg = EngineConfig { initial_equity: 1e6, lot_size: 100.0 };
    let strategy = |day: usize, _: &PortfolioState| Decision {
        orders: if day == 0 { (0..5).map(|i| EntryOrder { instrument: i, notional: 1e5, params }).collect() } else { Vec::new() },
        meta: DecisionMeta::default(),
    };
    let net = run_engine(&panel, 0, 7, &cfg, &CostModel::default(), &liq, strategy).unwrap();
    let gross = run_engine(&panel, 0, 7, &cfg, &CostModel::zero(), &liq, strategy).unwrap();
    assert_eq!(net.closed.len(), 5);
    assert_eq!(net.trades.len(), 10);
    let ledger_costs: f64 = net.trades.iter().map(|t| t.commission + t.stamp_tax + t.spread_cost + t.impact_cost).sum();
    let e0 = cfg.initial_equity;
    let net_ret = net.final_state.equity / e0 - 1.0;
    let gross_ret = gross.final_state.equity / e0 - 1.0;
    assert!(((gross_ret - net_ret) - ledger_costs / e0).abs() < 1e-12);
}

#[test]
fn metric_examples() {
    assert!((max_drawdown(&[100.0, 110.0, 99.0]) - 0.1).abs() < 1e-15);
    let up = compute_metrics(&[100.0, 101.0, 103.0, 106.0], &[], 0.02, 0.0).unwrap();
    assert_eq!(up.max_drawdown, 0.0);
    assert_eq!(up.calmar, None);
    let flat = compute_metrics(&[100.0; 5], &[], 0.02, 0.0).unwrap();
    assert_eq!(flat.sharpe, None);
    assert_eq!(flat.sortino, None);
    assert!(flat.zero_volatility);
    // geometric returns all equal: zero spread, flagged
    let g = compute_metrics(&[100.0, 101.0, 102.01, 103.0301], &[], 0.0, 0.0).unwrap();
    assert!(g.annual_volatility < 1e-12);
    assert!(compute_metrics(&[100.0], &[], 0.0, 0.0).is_none());
}

#[test]
fn annualization_conventions() {
    let eq = [100.0, 102.0, 101.0, 104.0, 103.0];
    let m = compute_metrics(&eq, &[], 0.0, 0.0).unwrap();
    let r: Vec<f64> = eq.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let mean = r.iter().sum::<f64>() / 4.0;
    let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((m.annual_volatility - sd * 252f64.sqrt()).abs() < 1e-12);
    assert!((m.annual_return - (1.03f64.powf(252.0 / 4.0) - 1.0)).abs() < 1e-9);
    assert!((m.sharpe.unwrap() - m.annual_return / m.annual_volatility).abs() < 1e-12);
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.generator.n_instruments = 30;
    cfg.data.generator.n_days = 420;
    cfg.universe.min_history = 120;
    cfg.exits.grid = turnover::exitgrid::GridSpec::reduced();
    cfg
}

#[test]
fn full_run_is_deterministic_and_consistent() {
    let cfg = small_config();
    let panel = cfg.load_panel().unwrap();
    let a = run_backtest(&panel, &cfg).unwrap();
    let b = run_backtest(&panel, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.days, b.days);
    assert_eq!(a.trades, b.trades);

    // equity recursion and holding periods
    for k in 1..a.days.len() {
        let (p, d) = (&a.days[k - 1], &a.days[k]);
        let rhs = p.equity + d.pnl - d.costs.total();
        assert!((d.equity - rhs).abs() <= 1e-6 * d.equity, "day {k}: {} vs {rhs}", d.equity);
    }
    assert!(a.closed.iter().all(|c| c.holding_days <= c.max_hold));

    // cost breakdown sums to the ledger
    let ledger: f64 = a.trades.iter().map(|t| t.total_cost()).sum();
    assert!((a.total_costs - ledger).abs() <= 1e-9 * ledger.max(1.0));
    let c = &a.costs;
    assert_eq!(c.commission + c.stamp_tax + c.spread_cost + c.impact_cost, a.total_costs);
    assert!((a.gross_return - a.net_return - a.total_costs / a.initial_equity).abs() < 1e-12);

    // regime rows partition the return days
    let n: usize = a.regime_table.iter().map(|r| r.n_days).sum();
    assert_eq!(n, a.days.len() - 1);
    assert!(a.trades.len() > 0);
}

#[test]
fn null_strategy_gives_flat_equity() {
    let mut cfg = small_config();
    cfg.costs = CostModel::zero();
    cfg.backtest.min_order_notional = 1e15;
    let panel = cfg.load_panel().unwrap();
    let r = run_backtest(&panel, &cfg).unwrap();
    assert!(r.trades.is_empty());
    assert!(r.days.iter().all(|d| d.equity == cfg.backtest.initial_equity));
    assert_eq!(r.metrics.annual_turnover, 0.0);
    assert_eq!(r.metrics.max_drawdown, 0.0);
}

fn synthetic_days(equity: &[f64]) -> Vec<DayRecord> {
    let dates = weekdays(d0(), equity.len());
    equity
        .iter()
        .zip(dates)
        .enumerate()
        .map(|(k, (&e, date))| DayRecord {
            date,
            day: k,
            equity: e,
            cash: e,
            gross_exposure: 0.0,
            n_positions: 0,
            pnl: 0.0,
            costs: TradeCosts::default(),
            traded_notional: 1000.0 * k as f64,
            deferred: 0,
            decision: DecisionMeta::default(),
        })
        .collect()
}

#[test]
fn single_regime_table_equals_global() {
    let days = synthetic_days(&[100.0, 101.0, 99.5, 102.0, 101.0, 103.5]);
    let all: Vec<bool> = (0..days.len()).map(|k| k > 0).collect();
    let global = masked_metrics(&days, &[], &all, 0.02).unwrap();
    let labels = vec![Some(1); days.len()];
    let (rows, flags) = regime_report(&days, &[], &labels, 0.02);
    let normal = rows.iter().find(|r| r.regime == "NormalVol").unwrap();
    assert_eq!(normal.metrics.unwrap(), global);
    assert_eq!(normal.n_days, days.len() - 1);
    assert_eq!(flags.len(), 2, "two empty regimes flagged: {flags:?}");
    assert!(rows.iter().filter(|r| r.regime != "NormalVol").all(|r| r.metrics.is_none()));
}

#[test]
fn two_regime_returns_match_masked_oracle() {
    let eq = [100.0, 102.0, 101.0, 100.0, 104.0, 105.0, 103.0];
    let days = synthetic_days(&eq);
    let labels = [None, Some(0), Some(2), Some(2), Some(0), Some(0), Some(2)];
    let (rows, _) = regime_report(&days, &[], &labels, 0.0);
    let row = |name: &str| rows.iter().find(|r| r.regime == name).unwrap().clone();
    for (name, label) in [("LowVol", 0), ("HighVol", 2)] {
        let growth: f64 = (1..eq.len()).filter(|&k| labels[k] == Some(label)).map(|k| eq[k] / eq[k - 1]).product();
        let n = (1..eq.len()).filter(|&k| labels[k] == Some(label)).count();
        let r = row(name);
        assert_eq!(r.n_days, n);
        let m = r.metrics.unwrap();
        assert!((m.total_return - (growth - 1.0)).abs() < 1e-12);
        assert!((m.annual_return - (growth.powf(252.0 / n as f64) - 1.0)).abs() < 1e-9);
    }
    let mut by_regime: BTreeMap<String, usize> = BTreeMap::new();
    for r in &rows {
        by_regime.insert(r.regime.clone(), r.n_days);
    }
    assert_eq!(by_regime.values().sum::<usize>(), eq.len() - 1);
}

#[test]
fn ablation_rows_in_order_and_reproducible() {
    let cfg = small_config();
    let panel = cfg.load_panel().unwrap();
    let prep = Prepared::build(&panel, &cfg, turnover::config::ModuleToggles::all()).unwrap();
    let rows = run_ablation_prepared(&prep).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.configuration.as_str()).collect();
    assert_eq!(names, ABLATION_ROWS.to_vec());
    // re-running a row alone reproduces it
    let again = run_prepared(&prep, rows[3].modules, ABLATION_ROWS[3]).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&rows[3].report).unwrap());
    // baseline scores are seeded
    let again0 = run_prepared(&prep, rows[0].modules, ABLATION_ROWS[0]).unwrap();
    assert_eq!(again0.trades, rows[0].report.trades);
    let mut buf = Vec::new();
    write_ablation_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "configuration,annual_return,sharpe,max_drawdown,win_rate");
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn report_files_are_written() {
    let cfg = small_config();
    let panel = cfg.load_panel().unwrap();
    let r = run_backtest(&panel, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_report(&r, dir.path()).unwrap();
    for f in REPORT_FILES {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let echoed: RunConfig = serde_json::from_value(json["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn spans_outside_the_panel_are_config_errors() {
    let mut cfg = small_config();
    cfg.split.test_end = Some(chrono::NaiveDate::from_ymd_opt(2030, 1, 1).unwrap());
    let panel = cfg.load_panel().unwrap();
    let err = run_backtest(&panel, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn monotone_equity_has_no_drawdown(steps in proptest::collection::vec(0.0f64..5.0, 1..60)) {
            let mut eq = vec![100.0];
            for s in steps {
                eq.push(eq.last().unwrap() + s);
            }
            prop_assert_eq!(max_drawdown(&eq), 0.0);
        }

        #[test]
        fn costs_are_nonnegative_and_sum(shares in 1.0f64..1e6, price in 0.5f64..500.0, adv in 1.0f64..1e8,
                                          vol in 0.0f64..0.1, buy in any::<bool>()) {
            let side = if buy { Side::Buy } else { Side::Sell };
            let c = apply_costs(&FillIntent { side, shares, price, adv_shares: adv, volatility: vol }, &CostModel::default()).unwrap();
            prop_assert!(c.commission >= 0.0 && c.stamp_tax >= 0.0 && c.spread_cost >= 0.0 && c.impact_cost >= 0.0);
            prop_assert_eq!(c.total(), c.commission + c.stamp_tax + c.spread_cost + c.impact_cost);
            let oracle = 0.5 * (shares / adv).sqrt() * vol * shares * price;
            prop_assert!((c.impact_cost - oracle).abs() <= 1e-9 * oracle.max(1.0));
        }
    }
}
