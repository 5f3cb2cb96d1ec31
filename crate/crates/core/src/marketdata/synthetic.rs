use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DailyBar, DataError, InstrumentId, Panel, Sector, Status};

/// Settings for the synthetic panel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_instruments: usize,
    pub n_days: usize,
    pub n_sectors: usize,
    pub start_date: NaiveDate,
    /// Scales every stochastic shock; 0 gives a deterministic drift-only path.
    pub vol_multiplier: f64,
    /// Daily close-to-close drift.
    pub drift: f64,
    /// Daily probability that a trading instrument enters a suspension spell.
    pub suspension_prob: f64,
    /// Daily probability that an instrument receives a special-treatment flag.
    pub st_prob: f64,
    /// Fraction of instruments listing partway through the sample.
    pub late_listing_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_instruments: 100,
            n_days: 1500,
            n_sectors: 8,
            start_date: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
            vol_multiplier: 1.0,
            drift: 0.0003,
            suspension_prob: 0.001,
            st_prob: 0.0002,
            late_listing_fraction: 0.0,
        }
    }
}

const REGIME_VOL: [f64; 3] = [0.6, 1.0, 1.9];
const REGIME_TRANSITIONS: [[f64; 3]; 3] = [[0.985, 0.012, 0.003], [0.010, 0.980, 0.010], [0.005, 0.025, 0.970]];

fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

struct Instrument {
    sector: Sector,
    beta: f64,
    idio_scale: f64,
    shares_out: f64,
    base_volume: f64,
    listing_day: usize,
    alpha: f64,
    latent_close: f64,
    last_close: f64,
    suspended_for: usize,
    st_for: usize,
}

/// Generates an `n_instruments × n_days` panel.
///
/// Returns follow a three-regime volatility process with market and sector
/// factors, a persistent idiosyncratic drift component and overnight gaps.
/// Output is a pure function of `(config, seed)`.
pub fn generate_synthetic_panel(config: &GeneratorConfig, seed: u64) -> Result<Panel, DataError> {
    if config.n_instruments == 0 || config.n_days == 0 {
        return Err(DataError::Config("instrument count and day count must be at least 1".into()));
    }
    if !(1..=8).contains(&config.n_sectors) {
        return Err(DataError::Config("sector count must be between 1 and 8".into()));
    }
    if !(config.vol_multiplier >= 0.0) {
        return Err(DataError::Config("vol_multiplier must be non-negative".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let calendar = weekday_calendar(config.start_date, config.n_days);
    let vm = config.vol_multiplier;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample::<f64, _>(StandardNormal) };

    let mut insts: Vec<Instrument> = (0..config.n_instruments)
        .map(|i| {
            let price = (rng.random_range(5f64.ln()..60f64.ln())).exp();
            let cap = (rng.random_range(3e9f64.ln()..1e11f64.ln())).exp();
            let turnover_rate = (rng.random_range(0.004f64.ln()..0.03f64.ln())).exp();
            let shares_out = cap / price;
            let late = rng.random::<f64>() < config.late_listing_fraction;
            let listing_day = if late { rng.random_range(0..config.n_days.div_ceil(2)) } else { 0 };
            Instrument {
                sector: Sector::ALL[i % config.n_sectors],
                beta: rng.random_range(0.6..1.4),
                idio_scale: rng.random_range(0.7..1.4),
                shares_out,
                base_volume: (shares_out * turnover_rate).round().max(100.0),
                listing_day,
                alpha: 0.0,
                latent_close: price,
                last_close: price,
                suspended_for: 0,
                st_for: 0,
            }
        })
        .collect();

    let mut regime = 1usize;
    let mut bars = Vec::with_capacity(config.n_instruments * config.n_days);
    for (day, &date) in calendar.iter().enumerate() {
        if day > 0 {
            let u: f64 = rng.random();
            let row = REGIME_TRANSITIONS[regime];
            regime = if u < row[0] {
                0
            } else if u < row[0] + row[1] {
                1
            } else {
                2
            };
        }
        let rv = REGIME_VOL[regime] * vm;
        let market = 0.010 * rv * normal(&mut rng);
        let sector_f: Vec<f64> = (0..8).map(|_| 0.006 * rv * normal(&mut rng)).collect();

        for (i, inst) in insts.iter_mut().enumerate() {
            // Every instrument consumes the same number of draws each day so the
            // stream layout does not depend on listing or suspension state.
            let z_alpha = normal(&mut rng);
            let z_idio = normal(&mut rng);
            let z_gap = normal(&mut rng);
            let z_hi = normal(&mut rng);
            let z_lo = normal(&mut rng);
            let z_vol = normal(&mut rng);
            let u_susp: f64 = rng.random();
            let susp_len = rng.random_range(1..=5usize);
            let u_st: f64 = rng.random();
            let st_len = rng.random_range(60..=250usize);

            if day < inst.listing_day {
                continue;
            }
            inst.alpha = 0.92 * inst.alpha + 0.0008 * vm * z_alpha;
            let common = inst.beta * market + sector_f[inst.sector.index()] + inst.alpha;
            let idio = 0.015 * rv * inst.idio_scale * z_idio;
            let r = (config.drift + common + idio).clamp(-0.25, 0.25);
            let g = (0.3 * common + 0.004 * rv * z_gap).clamp(-0.2, 0.2);

            let prev_latent = inst.latent_close;
            let open = prev_latent * (1.0 + g);
            let close = if day == inst.listing_day { prev_latent } else { prev_latent * (1.0 + r) };
            let open = if day == inst.listing_day { close } else { open };
            inst.latent_close = close;

            if inst.suspended_for > 0 {
                inst.suspended_for -= 1;
            } else if day > inst.listing_day && u_susp < config.suspension_prob {
                inst.suspended_for = susp_len;
            }
            if inst.st_for > 0 {
                inst.st_for -= 1;
            } else if u_st < config.st_prob {
                inst.st_for = st_len;
            }

            let id = InstrumentId::new(format!("S{i:04}"));
            if inst.suspended_for > 0 {
                let c = inst.last_close;
                bars.push(DailyBar {
                    instrument_id: id,
                    date,
                    open: c,
                    high: c,
                    low: c,
                    close: c,
                    volume: 0.0,
                    turnover: 0.0,
                    market_cap: inst.shares_out * c,
                    sector: inst.sector,
                    status: Status::Suspended,
                });
                continue;
            }
            let high = open.max(close) * (1.0 + 0.004 * rv * z_hi.abs());
            let low = open.min(close) * (1.0 - (0.004 * rv * z_lo.abs()).min(0.5));
            let volume = (inst.base_volume * (0.25 * vm * z_vol).exp() * (1.0 + 8.0 * (r - config.drift).abs()))
                .round()
                .max(100.0);
            let typical = (open + high + low + close) / 4.0;
            bars.push(DailyBar {
                instrument_id: id,
                date,
                open,
                high,
                low,
                close,
                volume,
                turnover: volume * typical,
                market_cap: inst.shares_out * close,
                sector: inst.sector,
                status: if inst.st_for > 0 { Status::SpecialTreatment } else { Status::Normal },
            });
            inst.last_close = close;
        }
    }
    Panel::with_calendar(calendar, bars)
}
