use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::boost::BoostedEnsemble;
use crate::sizing::PortfolioWeights;

pub const DEFAULT_BETAS: [f64; 3] = [0.6, 0.3, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSignal {
    pub date: NaiveDate,
    pub momentum_component: f64,
    pub volatility_component: f64,
    pub sentiment_component: f64,
    pub betas: [f64; 3],
    pub value: f64,
    pub exposure_multiplier: f64,
    /// The regime had no model of its own.
    pub fallback: bool,
}

impl TimingSignal {
    pub fn from_components(date: NaiveDate, components: [f64; 3], betas: [f64; 3], fallback: bool) -> Self {
        let value = betas[0] * components[0] + betas[1] * components[1] + betas[2] * components[2];
        Self {
            date,
            momentum_component: components[0],
            volatility_component: components[1],
            sentiment_component: components[2],
            betas,
            value,
            exposure_multiplier: exposure_multiplier(value),
            fallback,
        }
    }

    /// Full exposure, used before a model exists.
    pub fn neutral(date: NaiveDate) -> Self {
        Self {
            date,
            momentum_component: 0.0,
            volatility_component: 0.0,
            sentiment_component: 0.0,
            betas: [0.0; 3],
            value: 0.0,
            exposure_multiplier: 1.0,
            fallback: true,
        }
    }
}

/// clamp(0.5 + value, 0, 1); NaN maps to 0.
pub fn exposure_multiplier(value: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        (0.5 + value).clamp(0.0, 1.0)
    }
}

/// Momentum from the ensemble, volatility as minus the stress z-score.
pub fn timing_signal(
    date: NaiveDate,
    ensembles: &BoostedEnsemble<f64>,
    features: &[f64],
    regime: usize,
    betas: [f64; 3],
    stress_z: f64,
    sentiment: f64,
) -> TimingSignal {
    let (momentum, fallback) = ensembles.predict(features, regime);
    TimingSignal::from_components(date, [momentum, -stress_z, sentiment], betas, fallback)
}

pub fn apply_timing_filter(weights: &PortfolioWeights, signal: &TimingSignal) -> PortfolioWeights {
    let m = signal.exposure_multiplier;
    let mut out = weights.clone();
    for w in out.weights.values_mut() {
        *w *= m;
    }
    out.scale *= m;
    out
}
