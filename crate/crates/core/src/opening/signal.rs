use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::OpeningError;
use crate::marketdata::{InstrumentId, Panel};
use crate::volatility::VolSurface;

/// Volume-ratio lookback.
pub const VR_WINDOW: usize = 20;
pub const MIN_PRIOR_BARS: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeningSignal {
    pub instrument_id: InstrumentId,
    pub date: NaiveDate,
    pub gap: f64,
    /// Full-day volume over the prior 20-day mean; stands in for pre-market volume.
    pub volume_ratio: f64,
    pub vol: f64,
    pub sentiment: f64,
    pub weights: [f64; 4],
    pub value: f64,
}

impl OpeningSignal {
    pub fn components(&self) -> [f64; 4] {
        [self.gap, self.volume_ratio, self.vol, self.sentiment]
    }

    pub fn with_weights(mut self, weights: [f64; 4]) -> Self {
        self.weights = weights;
        self.value = combine(&weights, &self.components());
        self
    }
}

pub fn combine(weights: &[f64; 4], c: &[f64; 4]) -> f64 {
    weights[0] * c[0] + weights[1] * c[1] + weights[2] * c[2] + weights[3] * c[3]
}

/// Per-instrument sentiment score. The default implementation is neutral.
pub trait SentimentProvider: Send + Sync {
    fn sentiment(&self, date: NaiveDate, instrument: &InstrumentId) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroSentiment;

impl SentimentProvider for ZeroSentiment {
    fn sentiment(&self, _: NaiveDate, _: &InstrumentId) -> f64 {
        0.0
    }
}

/// Source of the GARCH volatility term.
pub trait VolSource {
    /// Daily GARCH standard deviation for (day, instrument index).
    fn garch_vol(&self, day: usize, inst: usize) -> Option<f64>;
}

impl VolSource for VolSurface {
    fn garch_vol(&self, day: usize, inst: usize) -> Option<f64> {
        self.get(day, inst).map(|e| e.sigma2_garch.max(0.0).sqrt())
    }
}

/// Same volatility everywhere; handy for tests and for runs without a surface.
#[derive(Debug, Clone, Copy)]
pub struct ConstantVol(pub f64);

impl VolSource for ConstantVol {
    fn garch_vol(&self, _: usize, _: usize) -> Option<f64> {
        Some(self.0)
    }
}

/// Builds the opening signal of `instrument` at `date`.
pub fn compute_opening_signal(
    panel: &Panel,
    date: NaiveDate,
    instrument: &InstrumentId,
    weights: [f64; 4],
    vol: &dyn VolSource,
    sentiment: &dyn SentimentProvider,
) -> Result<OpeningSignal, OpeningError> {
    let day = panel.day_index(date).ok_or(OpeningError::UnknownDate(date))?;
    let inst = panel
        .instrument_index(instrument)
        .ok_or_else(|| OpeningError::Unavailable(format!("unknown instrument {instrument}")))?;
    let components = signal_components(panel, day, inst, vol, sentiment)?;
    Ok(OpeningSignal {
        instrument_id: instrument.clone(),
        date,
        gap: components[0],
        volume_ratio: components[1],
        vol: components[2],
        sentiment: components[3],
        weights,
        value: combine(&weights, &components),
    })
}

/// (gap, volume ratio, GARCH vol, sentiment) for calendar index `day`.
pub fn signal_components(
    panel: &Panel,
    day: usize,
    inst: usize,
    vol: &dyn VolSource,
    sentiment: &dyn SentimentProvider,
) -> Result<[f64; 4], OpeningError> {
    let unavailable = |why: &str| OpeningError::Unavailable(format!("{} on {}: {why}", panel.instruments()[inst], panel.calendar()[day]));
    let bar = panel.bar(day, inst).ok_or_else(|| unavailable("no bar"))?;
    if !bar.is_tradable() {
        return Err(unavailable("suspended"));
    }
    if panel.history_before(inst, day) < MIN_PRIOR_BARS {
        return Err(unavailable("fewer than 21 prior bars"));
    }
    let prev_close = day.checked_sub(1).and_then(|d| panel.close(d, inst)).ok_or_else(|| unavailable("no previous close"))?;
    let gap = (bar.open - prev_close) / prev_close;

    let vols: Vec<f64> = (day.saturating_sub(VR_WINDOW)..day).filter_map(|d| panel.bar(d, inst)).map(|b| b.volume).collect();
    let mean_vol = vols.iter().sum::<f64>() / vols.len().max(1) as f64;
    if !(mean_vol > 0.0) {
        return Err(unavailable("no trailing volume"));
    }
    let vr = bar.volume / mean_vol;
    let v = vol.garch_vol(day, inst).ok_or_else(|| unavailable("no volatility estimate"))?;
    let s = sentiment.sentiment(panel.calendar()[day], &panel.instruments()[inst]);
    Ok([gap, vr, v, s])
}
