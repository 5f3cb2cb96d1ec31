use serde::{Deserialize, Serialize};

use super::BacktestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StampSide {
    #[default]
    SellOnly,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub commission_bps: f64,
    pub stamp_bps: f64,
    pub stamp_side: StampSide,
    pub spread_bps: f64,
    pub impact_coefficient: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { commission_bps: 5.0, stamp_bps: 10.0, stamp_side: StampSide::SellOnly, spread_bps: 2.1, impact_coefficient: 0.5 }
    }
}

impl CostModel {
    pub fn zero() -> Self {
        Self { commission_bps: 0.0, stamp_bps: 0.0, stamp_side: StampSide::SellOnly, spread_bps: 0.0, impact_coefficient: 0.0 }
    }

    pub fn validate(&self) -> Result<(), BacktestError> {
        let r = [self.commission_bps, self.stamp_bps, self.spread_bps, self.impact_coefficient];
        if r.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(())
        } else {
            Err(BacktestError::Config("cost rates must be finite and non-negative".into()))
        }
    }
}

/// coefficient · sqrt(shares / adv) · volatility · sign, as a fraction of
/// price. Positive for buys, negative for sells.
pub fn market_impact_with(coefficient: f64, shares: f64, adv_shares: f64, volatility: f64, side: Side) -> f64 {
    if shares <= 0.0 || adv_shares <= 0.0 {
        return 0.0;
    }
    coefficient * (shares / adv_shares).sqrt() * volatility * side.sign()
}

/// 0.5 · sqrt(shares / adv) · volatility · sign.
pub fn market_impact(shares: f64, adv_shares: f64, volatility: f64, side: Side) -> f64 {
    market_impact_with(0.5, shares, adv_shares, volatility, side)
}

/// What the engine wants to trade before costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillIntent {
    pub side: Side,
    pub shares: f64,
    pub price: f64,
    pub adv_shares: f64,
    /// Daily volatility used by the impact term.
    pub volatility: f64,
}

/// Per-trade charges in currency, all non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TradeCosts {
    pub commission: f64,
    pub stamp_tax: f64,
    pub spread_cost: f64,
    pub impact_cost: f64,
}

impl TradeCosts {
    pub fn total(&self) -> f64 {
        self.commission + self.stamp_tax + self.spread_cost + self.impact_cost
    }
}

/// Charges for one fill. Impact is always charged against the trader.
pub fn apply_costs(intent: &FillIntent, model: &CostModel) -> Result<TradeCosts, BacktestError> {
    let notional = intent.shares * intent.price;
    if !(notional > 0.0) || !notional.is_finite() {
        return Err(BacktestError::Order(format!("non-positive notional {notional}")));
    }
    let stamp = match (intent.side, model.stamp_side) {
        (Side::Sell, _) | (Side::Buy, StampSide::Both) => model.stamp_bps * 1e-4 * notional,
        (Side::Buy, StampSide::SellOnly) => 0.0,
    };
    let impact = market_impact_with(model.impact_coefficient, intent.shares, intent.adv_shares, intent.volatility, intent.side);
    Ok(TradeCosts {
        commission: model.commission_bps * 1e-4 * notional,
        stamp_tax: stamp,
        spread_cost: model.spread_bps * 1e-4 * notional,
        impact_cost: impact.abs() * notional,
    })
}
