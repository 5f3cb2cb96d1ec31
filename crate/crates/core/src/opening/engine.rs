//! Daily opening-signal model over a panel: rolling signal weights, the
//! pooled mixture fit and the date's entry thresholds.

use serde::{Deserialize, Serialize};

use super::decision::{EntryThresholds, TailMode};
use super::gmm::{fit_gmm_em, GmmFit, MIN_GMM_SAMPLES};
use super::signal::{combine, signal_components, OpeningSignal, SentimentProvider, VolSource};
use super::weights::{estimate_signal_weights, SignalObservation, WeightEstimate, MIN_WEIGHT_OBS};
use crate::marketdata::Panel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpeningConfig {
    /// Trailing days of pooled observations for the weight regression.
    pub weight_window: usize,
    pub decay: f64,
    pub lambda: f64,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub theta0: f64,
    pub beta: f64,
    pub phi: f64,
    /// ψ is this quantile of the date's rank probabilities.
    pub psi_quantile: f64,
    /// Days of market returns behind the threshold's realized volatility.
    pub rv_window: usize,
    pub tail_mode: TailMode,
    /// Used until enough observations exist for the regression.
    pub default_weights: [f64; 4],
    pub seed: u64,
}

impl Default for OpeningConfig {
    fn default() -> Self {
        Self {
            weight_window: 120,
            decay: 0.97,
            lambda: 5.0,
            gmm_max_iter: 100,
            gmm_tol: 1e-8,
            theta0: 0.0,
            beta: 0.01,
            phi: 0.55,
            psi_quantile: 0.6,
            rv_window: 5,
            tail_mode: TailMode::Posterior,
            default_weights: [1.0, 0.0, 0.0, 0.0],
            seed: 31,
        }
    }
}

/// Precomputed signal components and next-day open-to-close targets.
#[derive(Debug, Clone)]
pub struct OpeningPanel {
    n_instruments: usize,
    components: Vec<Option<[f64; 4]>>,
    targets: Vec<Option<f64>>,
    market_returns: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayOpening {
    pub weights: WeightEstimate<f64>,
    /// `(instrument index, signal)` for every requested instrument with data.
    pub signals: Vec<(usize, OpeningSignal)>,
    pub gmm: Option<GmmFit<f64>>,
    pub recent_vol: f64,
    pub theta_t: f64,
}

impl DayOpening {
    pub fn thresholds(&self, cfg: &OpeningConfig, psi: f64) -> EntryThresholds {
        EntryThresholds::new(cfg.theta0, cfg.beta, self.recent_vol, cfg.phi, psi)
    }
}

impl OpeningPanel {
    pub fn build(panel: &Panel, vol: &dyn VolSource, sentiment: &dyn SentimentProvider) -> Self {
        let (n_days, n_inst) = (panel.n_days(), panel.n_instruments());
        let mut components = vec![None; n_days * n_inst];
        let mut targets = vec![None; n_days * n_inst];
        for day in 0..n_days {
            for inst in 0..n_inst {
                components[day * n_inst + inst] = signal_components(panel, day, inst, vol, sentiment).ok();
                targets[day * n_inst + inst] = panel
                    .bar(day + 1, inst)
                    .filter(|b| b.is_tradable())
                    .map(|b| b.close / b.open - 1.0);
            }
        }
        let market_returns = (0..n_days)
            .map(|day| {
                let rs: Vec<f64> = (0..n_inst).filter_map(|i| panel.return_at(day, i)).collect();
                (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
            })
            .collect();
        Self { n_instruments: n_inst, components, targets, market_returns }
    }

    pub fn components(&self, day: usize, inst: usize) -> Option<[f64; 4]> {
        self.components.get(day * self.n_instruments + inst).copied().flatten()
    }

    /// Root mean square market return over the `window` days ending at `day`.
    pub fn recent_market_vol(&self, day: usize, window: usize) -> f64 {
        let rs: Vec<f64> = self.market_returns[(day + 1).saturating_sub(window)..=day].iter().flatten().copied().collect();
        if rs.is_empty() {
            return 0.0;
        }
        (rs.iter().map(|r| r * r).sum::<f64>() / rs.len() as f64).sqrt()
    }

    /// Observations whose target is realized by the close of `day`.
    pub fn history(&self, day: usize, window: usize) -> Vec<SignalObservation<f64>> {
        let mut out = Vec::new();
        for s in day.saturating_sub(window)..day {
            for inst in 0..self.n_instruments {
                let k = s * self.n_instruments + inst;
                if let (Some(c), Some(t)) = (self.components[k], self.targets[k]) {
                    out.push(SignalObservation { day: s, components: c, next_return: t });
                }
            }
        }
        out
    }

    /// Signals and mixture for `day` over the given instruments. Uses data
    /// dated ≤ `day` only.
    pub fn day_model(&self, panel: &Panel, day: usize, instruments: &[usize], cfg: &OpeningConfig) -> DayOpening {
        let hist = self.history(day, cfg.weight_window);
        let weights = if hist.len() >= MIN_WEIGHT_OBS {
            estimate_signal_weights(&hist, cfg.decay).unwrap_or(WeightEstimate { alpha: cfg.default_weights, ridge: true })
        } else {
            WeightEstimate { alpha: cfg.default_weights, ridge: false }
        };
        let date = panel.calendar()[day];
        let signals: Vec<(usize, OpeningSignal)> = instruments
            .iter()
            .filter_map(|&inst| {
                let c = self.components(day, inst)?;
                Some((
                    inst,
                    OpeningSignal {
                        instrument_id: panel.instruments()[inst].clone(),
                        date,
                        gap: c[0],
                        volume_ratio: c[1],
                        vol: c[2],
                        sentiment: c[3],
                        weights: weights.alpha,
                        value: combine(&weights.alpha, &c),
                    },
                ))
            })
            .collect();
        let values: Vec<f64> = signals.iter().map(|(_, s)| s.value).collect();
        let gmm = (values.len() >= MIN_GMM_SAMPLES)
            .then(|| fit_gmm_em(&values, cfg.lambda, cfg.seed ^ (day as u64).wrapping_mul(0x2545_F491_4F6C_DD1D), cfg.gmm_max_iter, cfg.gmm_tol).ok())
            .flatten();
        let recent_vol = self.recent_market_vol(day, cfg.rv_window);
        DayOpening { weights, signals, gmm, recent_vol, theta_t: cfg.theta0 + cfg.beta * recent_vol }
    }
}
