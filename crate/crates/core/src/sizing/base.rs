use serde::{Deserialize, Serialize};

use crate::marketdata::InstrumentId;

/// Participation cap as a fraction of average daily volume.
pub const MAX_PARTICIPATION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingInputs {
    pub instrument_id: InstrumentId,
    pub score: f64,
    pub market_cap: f64,
    /// One plus the 20-day return.
    pub momentum: f64,
    /// Mean daily traded value over 20 days.
    pub adv: f64,
    /// Annualized volatility.
    pub volatility: f64,
    pub target_volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiquidityMode {
    /// min(1, target / (adv · participation))
    #[default]
    AsPrinted,
    /// min(1, adv · participation / target)
    Inverse,
}

pub fn liquidity_factor(target_volume: f64, adv: f64, max_participation: f64, mode: LiquidityMode) -> f64 {
    let cap = adv * max_participation;
    match mode {
        LiquidityMode::AsPrinted => (target_volume / cap).min(1.0),
        LiquidityMode::Inverse => (cap / target_volume).min(1.0),
    }
}

/// Score · sqrt(cap) · momentum^0.2 / (adv^0.3 · vol^0.5) · λ.
///
/// `None` when momentum is not positive or another input is not strictly
/// positive; the caller skips the instrument.
pub fn base_weight(inputs: &SizingInputs, lambda: f64) -> Option<f64> {
    let SizingInputs { score, market_cap, momentum, adv, volatility, .. } = *inputs;
    if !(momentum > 0.0 && market_cap > 0.0 && adv > 0.0 && volatility > 0.0) || !score.is_finite() {
        return None;
    }
    Some(score * market_cap.sqrt() * momentum.powf(0.2) / (adv.powf(0.3) * volatility.sqrt()) * lambda)
}
