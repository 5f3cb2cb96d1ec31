//! Per-instrument daily volatility estimates over a whole panel.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::garch::{fit_garch_or_fallback, GarchParams, MIN_GARCH_OBS};
use super::kalman::{KalmanCombiner, KalmanConfig};
use super::realized::realized_vol;
use super::stress::{StressIndex, StressTracker};
use super::sv::{default_mu, SvConfig, SvFilter};
use super::VolError;
use crate::marketdata::Panel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolConfig {
    /// Trailing returns used for each GARCH fit.
    pub garch_window: usize,
    /// GARCH and SV level refits happen on calendar indices divisible by this.
    pub refit_every: usize,
    pub rv_window: usize,
    pub sv: SvConfig,
    pub kalman: KalmanConfig,
    pub stress_window: usize,
    pub stress_min_history: usize,
    pub seed: u64,
}

impl Default for VolConfig {
    fn default() -> Self {
        Self {
            garch_window: 500,
            refit_every: 21,
            rv_window: 20,
            sv: SvConfig::default(),
            kalman: KalmanConfig::default(),
            stress_window: 250,
            stress_min_history: 20,
            seed: 23,
        }
    }
}

impl VolConfig {
    pub fn validate(&self) -> Result<(), VolError> {
        if self.garch_window < MIN_GARCH_OBS || self.refit_every == 0 || self.rv_window < 2 {
            return Err(VolError::Config("garch_window ≥ 100, refit_every ≥ 1 and rv_window ≥ 2 required".into()));
        }
        if self.stress_window < 20 {
            return Err(VolError::Config("stress_window must be at least 20".into()));
        }
        Ok(())
    }
}

/// Daily variance estimates for one instrument on one date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolEstimate {
    pub date: NaiveDate,
    pub sigma2_garch: f64,
    pub sigma2_rv: f64,
    pub sigma2_sv: f64,
    pub weights: [f64; 3],
    pub sigma2_combined: f64,
    pub garch_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct VolSurface {
    n_instruments: usize,
    cells: Vec<Option<VolEstimate>>,
    stress: Vec<Option<StressIndex>>,
}

struct InstrumentState {
    returns: Vec<f64>,
    garch: Option<(GarchParams<f64>, bool)>,
    garch_var: f64,
    sv: Option<SvFilter<f64>>,
    sv_var: f64,
    kalman: KalmanCombiner<f64>,
    prev_x: Option<[f64; 3]>,
}

impl VolSurface {
    /// Estimates for day `t` use returns dated ≤ `t` only.
    pub fn build(panel: &Panel, cfg: &VolConfig) -> Result<Self, VolError> {
        cfg.validate()?;
        let n_days = panel.n_days();
        let n_inst = panel.n_instruments();
        let columns: Vec<Vec<Option<VolEstimate>>> = (0..n_inst)
            .into_par_iter()
            .map(|inst| instrument_path(panel, inst, cfg))
            .collect();
        let mut cells = vec![None; n_days * n_inst];
        for (inst, col) in columns.into_iter().enumerate() {
            for (day, est) in col.into_iter().enumerate() {
                cells[day * n_inst + inst] = est;
            }
        }
        let mut tracker = StressTracker::new(cfg.stress_window, cfg.stress_min_history);
        let stress = (0..n_days)
            .map(|day| {
                let vols: Vec<f64> = cells[day * n_inst..(day + 1) * n_inst]
                    .iter()
                    .flatten()
                    .map(|e| e.sigma2_combined.max(0.0).sqrt())
                    .collect();
                tracker.push(panel.calendar()[day], &vols)
            })
            .collect();
        Ok(Self { n_instruments: n_inst, cells, stress })
    }

    pub fn get(&self, day: usize, inst: usize) -> Option<&VolEstimate> {
        self.cells.get(day * self.n_instruments + inst).and_then(Option::as_ref)
    }

    pub fn stress(&self, day: usize) -> Option<&StressIndex> {
        self.stress.get(day).and_then(Option::as_ref)
    }

    pub fn n_days(&self) -> usize {
        self.stress.len()
    }

    /// Rows of (date, instrument, estimate) for export.
    pub fn write_csv<W: std::io::Write>(&self, panel: &Panel, writer: W) -> Result<(), VolError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "instrument", "sigma2_garch", "sigma2_rv", "sigma2_sv", "a1", "a2", "a3", "sigma2_combined"])
            .map_err(|e| VolError::Data(e.to_string()))?;
        for day in 0..self.n_days() {
            for inst in 0..self.n_instruments {
                if let Some(e) = self.get(day, inst) {
                    w.write_record([
                        e.date.to_string(),
                        panel.instruments()[inst].to_string(),
                        e.sigma2_garch.to_string(),
                        e.sigma2_rv.to_string(),
                        e.sigma2_sv.to_string(),
                        e.weights[0].to_string(),
                        e.weights[1].to_string(),
                        e.weights[2].to_string(),
                        e.sigma2_combined.to_string(),
                    ])
                    .map_err(|e| VolError::Data(e.to_string()))?;
                }
            }
        }
        w.flush().map_err(|e| VolError::Data(e.to_string()))
    }
}

fn instrument_path(panel: &Panel, inst: usize, cfg: &VolConfig) -> Vec<Option<VolEstimate>> {
    let mut st = InstrumentState {
        returns: Vec::new(),
        garch: None,
        garch_var: 0.0,
        sv: None,
        sv_var: 0.0,
        kalman: KalmanCombiner::new(&cfg.kalman),
        prev_x: None,
    };
    let seed = cfg.seed ^ (inst as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut out = Vec::with_capacity(panel.n_days());
    for day in 0..panel.n_days() {
        if let Some(r) = panel.return_at(day, inst) {
            if let Some(px) = st.prev_x {
                st.kalman.update(px, r * r);
            }
            st.returns.push(r);
            if let Some((p, _)) = &st.garch {
                st.garch_var = p.step(st.garch_var, r);
            }
            if let Some(f) = &mut st.sv {
                st.sv_var = f.step(r).variance;
            }
        }
        if day % cfg.refit_every == 0 && st.returns.len() >= MIN_GARCH_OBS {
            let tail = &st.returns[st.returns.len().saturating_sub(cfg.garch_window)..];
            let prev = st.garch.as_ref().filter(|(_, fb)| !fb).map(|(p, _)| *p);
            let fit = fit_garch_or_fallback(tail, prev.as_ref());
            st.garch_var = *fit.variance.last().expect("filter emits at least one value");
            st.garch = Some((fit.params, fit.fallback));
            if let Ok(mu) = default_mu(tail) {
                match &mut st.sv {
                    Some(f) => f.mu = mu,
                    None => {
                        if let Ok(mut f) = SvFilter::new(&cfg.sv, mu, seed) {
                            // warm the filter over the fit window
                            for &r in tail {
                                st.sv_var = f.step(r).variance;
                            }
                            st.sv = Some(f);
                        }
                    }
                }
            }
        }
        let tradable = panel.bar(day, inst).is_some_and(|b| b.is_tradable());
        let rv = realized_vol(&st.returns, cfg.rv_window);
        let est = match (&st.garch, &st.sv, rv, tradable) {
            (Some((_, fallback)), Some(_), Some(rv), true) => {
                let x = [st.garch_var, rv, st.sv_var];
                let c = st.kalman.combine(x);
                st.prev_x = Some(x);
                Some(VolEstimate {
                    date: panel.calendar()[day],
                    sigma2_garch: x[0],
                    sigma2_rv: x[1],
                    sigma2_sv: x[2],
                    weights: c.weights,
                    sigma2_combined: c.value,
                    garch_fallback: *fallback,
                })
            }
            _ => {
                st.prev_x = None;
                None
            }
        };
        out.push(est);
    }
    out
}
