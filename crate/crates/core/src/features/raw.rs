use chrono::NaiveDate;

use super::FeaturePanel;
use crate::marketdata::{DataError, Panel, UniverseSnapshot};
use crate::stats;

/// Representative technical and microstructure feature set.
pub const FEATURE_NAMES: [&str; 30] = [
    "mom_5",
    "mom_10",
    "mom_20",
    "mom_60",
    "rv_20",
    "rv_60",
    "volume_ratio_20",
    "overnight_gap",
    "reversal_5",
    "turnover_rate",
    "log_market_cap",
    "volume_skew_20",
    "rsi_14",
    "macd",
    "macd_signal",
    "macd_hist",
    "williams_r_14",
    "mom_20_skip_5",
    "intraday_return",
    "range_20",
    "amihud_20",
    "dist_ma_20",
    "dist_ma_60",
    "max_ret_20",
    "min_ret_20",
    "downside_vol_20",
    "volume_trend_5_20",
    "turnover_trend_5_60",
    "upper_shadow_5",
    "ret_1",
];

const LOOKBACK: usize = 61;

/// Trailing window of one instrument's bars; index 0 is the current day.
struct Window {
    open: [Option<f64>; LOOKBACK],
    high: [Option<f64>; LOOKBACK],
    low: [Option<f64>; LOOKBACK],
    close: [Option<f64>; LOOKBACK],
    volume: [Option<f64>; LOOKBACK],
    turnover: [Option<f64>; LOOKBACK],
    market_cap: Option<f64>,
    tradable: bool,
}

impl Window {
    fn load(panel: &Panel, day: usize, inst: usize) -> Self {
        let mut w = Window {
            open: [None; LOOKBACK],
            high: [None; LOOKBACK],
            low: [None; LOOKBACK],
            close: [None; LOOKBACK],
            volume: [None; LOOKBACK],
            turnover: [None; LOOKBACK],
            market_cap: None,
            tradable: false,
        };
        for k in 0..LOOKBACK.min(day + 1) {
            if let Some(b) = panel.bar(day - k, inst) {
                w.open[k] = Some(b.open);
                w.high[k] = Some(b.high);
                w.low[k] = Some(b.low);
                w.close[k] = Some(b.close);
                w.volume[k] = Some(b.volume);
                w.turnover[k] = Some(b.turnover);
                if k == 0 {
                    w.market_cap = Some(b.market_cap);
                    w.tradable = b.is_tradable();
                }
            }
        }
        w
    }

    fn ret(&self, k: usize) -> Option<f64> {
        Some(self.close.get(k)?.as_ref()? / self.close.get(k + 1)?.as_ref()? - 1.0)
    }

    fn rets(&self, from: usize, n: usize) -> Option<Vec<f64>> {
        (from..from + n).map(|k| self.ret(k)).collect()
    }

    fn series(xs: &[Option<f64>], from: usize, n: usize) -> Option<Vec<f64>> {
        xs.get(from..from + n)?.iter().copied().collect()
    }

    fn mom(&self, from: usize, to: usize) -> Option<f64> {
        Some(self.close[from]? / self.close[to]? - 1.0)
    }
}

fn ema(xs_oldest_first: &[f64], span: usize) -> Vec<f64> {
    let a = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(xs_oldest_first.len());
    let mut e = xs_oldest_first[0];
    for &x in xs_oldest_first {
        e = a * x + (1.0 - a) * e;
        out.push(e);
    }
    out
}

fn features_for(w: &Window) -> [Option<f64>; 30] {
    let mut f = [None; 30];
    let c0 = w.close[0];
    f[0] = w.mom(0, 5);
    f[1] = w.mom(0, 10);
    f[2] = w.mom(0, 20);
    f[3] = w.mom(0, 60);
    let r20 = w.rets(0, 20);
    let r60 = w.rets(0, 60);
    f[4] = r20.as_deref().and_then(stats::std_sample);
    f[5] = r60.as_deref().and_then(stats::std_sample);
    let v21 = Window::series(&w.volume, 0, 21);
    f[6] = v21.as_ref().and_then(|v| {
        let m = stats::mean(&v[1..])?;
        (m > 0.0).then(|| v[0] / m)
    });
    f[7] = if w.tradable { w.open[0].zip(w.close[1]).map(|(o, c)| o / c - 1.0) } else { None };
    f[8] = w.mom(1, 6).map(|m| -m);
    f[9] = (|| Some(w.turnover[0]? / w.market_cap?))();
    f[10] = w.market_cap.map(f64::ln);
    f[11] = Window::series(&w.volume, 0, 20).and_then(|v| stats::skewness(&v));
    f[12] = w.rets(0, 14).map(|r| {
        let gain: f64 = r.iter().map(|x| x.max(0.0)).sum();
        let loss: f64 = r.iter().map(|x| (-x).max(0.0)).sum();
        if gain + loss == 0.0 {
            50.0
        } else {
            100.0 * gain / (gain + loss)
        }
    });
    if let Some(mut closes) = Window::series(&w.close, 0, LOOKBACK) {
        closes.reverse();
        let e12 = ema(&closes, 12);
        let e26 = ema(&closes, 26);
        let macd: Vec<f64> = e12.iter().zip(&e26).zip(&closes).map(|((a, b), c)| (a - b) / c).collect();
        let signal = ema(&macd, 9);
        let m = *macd.last().expect("non-empty");
        let s = *signal.last().expect("non-empty");
        f[13] = Some(m);
        f[14] = Some(s);
        f[15] = Some(m - s);
    }
    f[16] = (|| {
        let hh = Window::series(&w.high, 0, 14)?.into_iter().fold(f64::MIN, f64::max);
        let ll = Window::series(&w.low, 0, 14)?.into_iter().fold(f64::MAX, f64::min);
        let c = c0?;
        (hh > ll).then(|| -100.0 * (hh - c) / (hh - ll))
    })();
    f[17] = w.mom(5, 20);
    f[18] = if w.tradable { c0.zip(w.open[0]).map(|(c, o)| c / o - 1.0) } else { None };
    f[19] = (|| {
        let v: Option<Vec<f64>> = (0..20).map(|k| Some((w.high[k]? - w.low[k]?) / w.close[k]?)).collect();
        stats::mean(&v?)
    })();
    f[20] = (|| {
        let r = r20.as_ref()?;
        let ratios: Vec<f64> = (0..20)
            .filter_map(|k| {
                let t = w.turnover[k]?;
                (t > 0.0).then(|| r[k].abs() / t * 1e9)
            })
            .collect();
        stats::mean(&ratios)
    })();
    f[21] = Window::series(&w.close, 0, 20).and_then(|v| c0.zip(stats::mean(&v)).map(|(c, m)| c / m - 1.0));
    f[22] = Window::series(&w.close, 0, 60).and_then(|v| c0.zip(stats::mean(&v)).map(|(c, m)| c / m - 1.0));
    f[23] = r20.as_ref().map(|r| r.iter().copied().fold(f64::MIN, f64::max));
    f[24] = r20.as_ref().map(|r| r.iter().copied().fold(f64::MAX, f64::min));
    f[25] = r20.as_ref().map(|r| (r.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / 20.0).sqrt());
    f[26] = (|| {
        let v = Window::series(&w.volume, 0, 20)?;
        let long = stats::mean(&v)?;
        (long > 0.0).then(|| stats::mean(&v[..5]).expect("non-empty") / long)
    })();
    f[27] = (|| {
        let v = Window::series(&w.turnover, 0, 60)?;
        let long = stats::mean(&v)?;
        (long > 0.0).then(|| stats::mean(&v[..5]).expect("non-empty") / long)
    })();
    f[28] = (|| {
        let v: Option<Vec<f64>> =
            (0..5).map(|k| Some((w.high[k]? - w.open[k]?.max(w.close[k]?)) / w.close[k]?)).collect();
        stats::mean(&v?)
    })();
    f[29] = w.ret(0);
    f
}

pub fn compute_raw_features(
    panel: &Panel,
    date: NaiveDate,
    universe: &UniverseSnapshot,
) -> Result<FeaturePanel, DataError> {
    let day = panel.day_index(date).ok_or(DataError::Lookup(date))?;
    Ok(compute_raw_features_at(panel, day, universe))
}

/// Raw features for the universe members on `day`, reading bars dated ≤ `day`.
/// Features lacking history are marked missing.
pub fn compute_raw_features_at(panel: &Panel, day: usize, universe: &UniverseSnapshot) -> FeaturePanel {
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut fp = FeaturePanel::empty(panel.calendar()[day], universe.members.clone(), names);
    for (row, &inst) in universe.indices.iter().enumerate() {
        let w = Window::load(panel, day, inst);
        for (k, v) in features_for(&w).into_iter().enumerate() {
            if let Some(v) = v {
                fp.set(row, k, v);
            }
        }
    }
    fp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{DailyBar, InstrumentId, Sector, Status};

    fn panel_from_closes(closes: &[f64], suspended_last: bool) -> Panel {
        let d0 = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        let n = closes.len();
        let bars = closes
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let susp = suspended_last && k == n - 1;
                DailyBar {
                    instrument_id: InstrumentId::new("X"),
                    date: d0 + chrono::Duration::days(k as i64),
                    open: c,
                    high: c * 1.01,
                    low: c * 0.99,
                    close: c,
                    volume: if susp { 0.0 } else { 1000.0 },
                    turnover: if susp { 0.0 } else { 1000.0 * c },
                    market_cap: 1e9,
                    sector: Sector::Energy,
                    status: if susp { Status::Suspended } else { Status::Normal },
                }
            })
            .collect();
        Panel::from_bars(bars).unwrap()
    }

    fn all_members(p: &Panel, day: usize) -> UniverseSnapshot {
        UniverseSnapshot { date: p.calendar()[day], members: p.instruments().to_vec(), indices: vec![0] }
    }

    #[test]
    fn flat_prices_give_zero_momentum() {
        let p = panel_from_closes(&[10.0; 70], false);
        let fp = compute_raw_features_at(&p, 69, &all_members(&p, 69));
        for k in 0..4 {
            assert_eq!(fp.get(0, k), Some(0.0));
        }
    }

    #[test]
    fn five_day_momentum() {
        let p = panel_from_closes(&[100.0, 101.0, 102.0, 103.0, 104.0, 105.0], false);
        let fp = compute_raw_features_at(&p, 5, &all_members(&p, 5));
        assert!((fp.get(0, 0).unwrap() - 0.05).abs() < 1e-12);
        // longer horizons lack history
        assert_eq!(fp.get(0, 3), None);
    }

    #[test]
    fn suspended_day_has_no_gap() {
        let p = panel_from_closes(&[10.0; 30], true);
        let fp = compute_raw_features_at(&p, 29, &all_members(&p, 29));
        assert_eq!(fp.get(0, 7), None);
    }

    #[test]
    fn ignores_future_bars() {
        let closes: Vec<f64> = (0..80).map(|k| 10.0 + (k as f64 * 0.37).sin()).collect();
        let p = panel_from_closes(&closes, false);
        let full = compute_raw_features_at(&p, 65, &all_members(&p, 65));
        let cut = p.truncate_after(65);
        let trunc = compute_raw_features_at(&cut, 65, &all_members(&cut, 65));
        assert_eq!(full, trunc);
    }
}
