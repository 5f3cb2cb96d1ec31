//! Position sizing: multi-factor base weights, liquidity adjustment,
//! constraint projection and stress scaling.

mod base;
mod project;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use base::{base_weight, liquidity_factor, LiquidityMode, SizingInputs, MAX_PARTICIPATION};
pub use project::{project_weights, BindingFlags, ConstraintSet, LargeCapBinding, Projection};

use crate::marketdata::{InstrumentId, Sector};

#[derive(Debug, Error)]
pub enum SizingError {
    #[error("infeasible constraints: {0}")]
    Infeasible(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub date: NaiveDate,
    pub weights: BTreeMap<InstrumentId, f64>,
    pub flags: BindingFlags,
    /// Multiplier applied by stress scaling, 1 when unscaled.
    pub scale: f64,
}

impl PortfolioWeights {
    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Map-based wrapper around [`project_weights`].
pub fn project_constraints(
    date: NaiveDate,
    raw: &BTreeMap<InstrumentId, f64>,
    sectors: &BTreeMap<InstrumentId, Sector>,
    large_caps: &BTreeSet<InstrumentId>,
    cs: &ConstraintSet,
) -> Result<PortfolioWeights, SizingError> {
    let ids: Vec<&InstrumentId> = raw.keys().collect();
    let mut sector_idx = Vec::with_capacity(ids.len());
    for id in &ids {
        let s = sectors.get(*id).ok_or_else(|| SizingError::Shape(format!("no sector for {id}")))?;
        sector_idx.push(s.index());
    }
    let large: Vec<bool> = ids.iter().map(|id| large_caps.contains(*id)).collect();
    let values: Vec<f64> = raw.values().copied().collect();
    let p = project_weights(&values, &sector_idx, &large, cs)?;
    Ok(PortfolioWeights {
        date,
        weights: ids.into_iter().cloned().zip(p.weights).collect(),
        flags: p.flags,
        scale: 1.0,
    })
}

/// clamp(1 − 0.5·z, 0.25, 1.25)
pub fn stress_factor(zscore: f64) -> f64 {
    (1.0 - 0.5 * zscore).clamp(0.25, 1.25)
}

/// Multiplies every weight by the stress factor and reapplies the `w_max` cap.
pub fn volatility_scale(weights: &PortfolioWeights, zscore: f64, w_max: f64) -> PortfolioWeights {
    let f = stress_factor(zscore);
    let mut out = weights.clone();
    for w in out.weights.values_mut() {
        *w = (*w * f).min(w_max);
    }
    out.scale = weights.scale * f;
    out
}
