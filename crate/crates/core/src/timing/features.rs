//! Market-level features over short, medium and long horizons.

use serde::{Deserialize, Serialize};

use super::TimingError;
use crate::marketdata::Panel;

pub const MIN_TIMING_HISTORY: usize = 60;

pub const FEATURE_NAMES: [&str; 10] = [
    "mom_1",
    "mom_5",
    "vw_ret_5",
    "dispersion_5",
    "dispersion_20",
    "vol_transition",
    "momentum_spread",
    "trend_60",
    "size_spread_60",
    "correlation_60",
];

/// Features that stand in for data the panel does not carry.
pub const PROXY_FEATURES: [&str; 2] = ["size_spread_60", "correlation_60"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiScaleFeatures {
    pub date: chrono::NaiveDate,
    pub day: usize,
    /// mom_1, mom_5, vw_ret_5.
    pub short: [f64; 3],
    /// dispersion_5, dispersion_20, vol_transition, momentum_spread.
    pub medium: [f64; 4],
    /// trend_60, size_spread_60, correlation_60.
    pub long: [f64; 3],
    pub proxies: Vec<String>,
}

impl MultiScaleFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        self.short.iter().chain(&self.medium).chain(&self.long).copied().collect()
    }
}

/// Population standard deviation of the day's returns across instruments.
/// `None` with fewer than one return.
pub fn cross_sectional_dispersion(panel: &Panel, day: usize) -> Option<f64> {
    let rets: Vec<f64> = (0..panel.n_instruments()).filter_map(|i| panel.return_at(day, i)).collect();
    crate::stats::std_pop(&rets)
}

/// Per-day market aggregates shared by all feature dates.
#[derive(Debug, Clone)]
pub struct TimingFeatureBuilder<'a> {
    panel: &'a Panel,
    /// Equal-weighted mean return, 0 when no instrument has a return.
    pub market_return: Vec<f64>,
    dispersion: Vec<f64>,
    vw_num: Vec<f64>,
    vw_den: Vec<f64>,
}

impl<'a> TimingFeatureBuilder<'a> {
    pub fn new(panel: &'a Panel) -> Self {
        let n = panel.n_days();
        let mut market_return = vec![0.0; n];
        let mut dispersion = vec![0.0; n];
        let mut vw_num = vec![0.0; n];
        let mut vw_den = vec![0.0; n];
        for d in 0..n {
            let mut rets = Vec::new();
            for i in 0..panel.n_instruments() {
                if let Some(r) = panel.return_at(d, i) {
                    rets.push(r);
                    let v = panel.bar(d, i).map(|b| b.volume).unwrap_or(0.0);
                    vw_num[d] += v * r;
                    vw_den[d] += v;
                }
            }
            if !rets.is_empty() {
                market_return[d] = crate::stats::mean(&rets).expect("non-empty");
                dispersion[d] = crate::stats::std_pop(&rets).expect("non-empty");
            }
        }
        Self { panel, market_return, dispersion, vw_num, vw_den }
    }

    /// Sum of market returns over `(day, day + h]`; `None` past the panel end.
    pub fn forward_return(&self, day: usize, h: usize) -> Option<f64> {
        (day + h < self.market_return.len()).then(|| self.market_return[day + 1..=day + h].iter().sum())
    }

    fn window(&self, v: &[f64], day: usize, len: usize) -> f64 {
        v[day + 1 - len..=day].iter().sum::<f64>() / len as f64
    }

    fn rms(&self, day: usize, len: usize) -> f64 {
        (self.market_return[day + 1 - len..=day].iter().map(|r| r * r).sum::<f64>() / len as f64).sqrt()
    }

    fn simple_return(&self, inst: usize, from: usize, to: usize) -> Option<f64> {
        let a = self.panel.close(from, inst)?;
        let b = self.panel.close(to, inst)?;
        (a > 0.0).then(|| b / a - 1.0)
    }

    /// Quintile spread of `score` on `at`, measured by the return over
    /// `(at, to]`.
    fn quintile_spread(&self, score: impl Fn(usize) -> Option<f64>, at: usize, to: usize) -> f64 {
        let mut scored: Vec<(f64, usize)> = (0..self.panel.n_instruments()).filter_map(|i| score(i).map(|s| (s, i))).collect();
        if scored.len() < 5 {
            return 0.0;
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let q = scored.len() / 5;
        let avg = |set: &[(f64, usize)]| {
            let r: Vec<f64> = set.iter().filter_map(|&(_, i)| self.simple_return(i, at, to)).collect();
            crate::stats::mean(&r).unwrap_or(0.0)
        };
        avg(&scored[scored.len() - q..]) - avg(&scored[..q])
    }

    pub fn features_at(&self, day: usize) -> Result<MultiScaleFeatures, TimingError> {
        if day < MIN_TIMING_HISTORY || day >= self.panel.n_days() {
            return Err(TimingError::Unavailable(format!("day {day} lacks {MIN_TIMING_HISTORY} days of history")));
        }
        let m = &self.market_return;
        let mom_1 = m[day];
        let mom_5: f64 = m[day - 4..=day].iter().sum();
        let den: f64 = self.vw_den[day - 4..=day].iter().sum();
        let vw_ret_5 = if den > 0.0 { self.vw_num[day - 4..=day].iter().sum::<f64>() / den } else { 0.0 };

        let dispersion_5 = self.window(&self.dispersion, day, 5);
        let dispersion_20 = self.window(&self.dispersion, day, 20);
        let (rv5, rv20) = (self.rms(day, 5), self.rms(day, 20));
        let vol_transition = if rv5 > rv20 { 1.0 } else { 0.0 };
        // Winners minus losers on the 20-day return known five days ago.
        let momentum_spread = self.quintile_spread(|i| self.simple_return(i, day - 25, day - 5), day - 5, day);

        // Slope of the cumulative market index over 60 days, annualized.
        let mut level = 0.0;
        let ys: Vec<f64> = m[day - 59..=day]
            .iter()
            .map(|r| {
                level += r;
                level
            })
            .collect();
        let n = ys.len() as f64;
        let xbar = (n - 1.0) / 2.0;
        let ybar = ys.iter().sum::<f64>() / n;
        let sxy: f64 = ys.iter().enumerate().map(|(k, y)| (k as f64 - xbar) * (y - ybar)).sum();
        let sxx: f64 = (0..ys.len()).map(|k| (k as f64 - xbar).powi(2)).sum();
        let trend_60 = sxy / sxx * 252.0;

        // Small minus large on 60-day returns, a valuation stand-in.
        let size_spread_60 = -self.quintile_spread(
            |i| self.panel.bar(day - 60, i).map(|b| b.market_cap.ln()),
            day - 60,
            day,
        );
        // Variance of the market return relative to the mean single-name
        // variance, a crude average-correlation gauge.
        let mut single = Vec::new();
        for i in 0..self.panel.n_instruments() {
            let r: Vec<f64> = (day - 59..=day).filter_map(|d| self.panel.return_at(d, i)).collect();
            if r.len() >= 40 {
                single.push(crate::stats::variance_pop(&r).expect("non-empty"));
            }
        }
        let mkt_var = crate::stats::variance_pop(&m[day - 59..=day]).expect("non-empty");
        let avg_var = crate::stats::mean(&single).unwrap_or(0.0);
        let correlation_60 = if avg_var > 0.0 { (mkt_var / avg_var).min(1.0) } else { 0.0 };

        Ok(MultiScaleFeatures {
            date: self.panel.calendar()[day],
            day,
            short: [mom_1, mom_5, vw_ret_5],
            medium: [dispersion_5, dispersion_20, vol_transition, momentum_spread],
            long: [trend_60, size_spread_60, correlation_60],
            proxies: PROXY_FEATURES.iter().map(|s| s.to_string()).collect(),
        })
    }
}

pub fn build_multiscale_features(panel: &Panel, date: chrono::NaiveDate) -> Result<MultiScaleFeatures, TimingError> {
    let day = panel.day_index(date).ok_or(TimingError::UnknownDate(date))?;
    TimingFeatureBuilder::new(panel).features_at(day)
}
