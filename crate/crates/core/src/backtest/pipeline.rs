//! Walk-forward preparation of every model input, and the daily strategy.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{run_engine, Decision, DecisionMeta, EngineConfig, EntryOrder, Liquidity, PortfolioState};
use super::report::BacktestReport;
use crate::config::{derive_seed, ModuleToggles, ResolvedSplit, RunConfig, STREAM_BASELINE, STREAM_HMM};
use crate::crosssection::{predict_scores, train_walk_forward, RankScore, TrainedModel};
use crate::error::Error;
use crate::exitgrid::{
    enumerate_grid, fit_regime_hmm, optimize_per_regime, smooth_params, viterbi_online, EntryRecord, ExitParams,
    GridEvalConfig, GridPoint, HmmFit, RegimeOptimum, MIN_HMM_OBS, N_STATES,
};
use crate::features::FeatureStore;
use crate::marketdata::{InstrumentId, Panel};
use crate::opening::{entry_decision, OpeningPanel, ZeroSentiment};
use crate::sizing::{base_weight, liquidity_factor, project_weights, volatility_scale, ConstraintSet, PortfolioWeights, SizingInputs};
use crate::stats;
use crate::timing::{apply_timing_filter, fit_timing_model, timing_signal, BoostedEnsemble, TimingFeatureBuilder, TimingSignal, FEATURE_NAMES};
use crate::volatility::VolSurface;

const ADV_WINDOW: usize = 20;
const MOMENTUM_WINDOW: usize = 20;

/// Per-day, per-instrument liquidity and risk inputs known at the close.
#[derive(Debug, Clone)]
pub struct PanelLiquidity {
    n_inst: usize,
    adv_shares: Vec<f64>,
    adv_value: Vec<f64>,
    daily_vol: Vec<f64>,
}

impl PanelLiquidity {
    pub fn build(panel: &Panel, vol: &VolSurface) -> Self {
        let (n_days, n_inst) = (panel.n_days(), panel.n_instruments());
        let mut adv_shares = vec![0.0; n_days * n_inst];
        let mut adv_value = vec![0.0; n_days * n_inst];
        let mut daily_vol = vec![0.0; n_days * n_inst];
        for inst in 0..n_inst {
            for day in 0..n_days {
                let lo = (day + 1).saturating_sub(ADV_WINDOW);
                let bars: Vec<_> = (lo..=day).filter_map(|d| panel.bar(d, inst)).filter(|b| b.is_tradable()).collect();
                let k = day * n_inst + inst;
                if !bars.is_empty() {
                    adv_shares[k] = bars.iter().map(|b| b.volume).sum::<f64>() / bars.len() as f64;
                    adv_value[k] = bars.iter().map(|b| b.turnover).sum::<f64>() / bars.len() as f64;
                }
                daily_vol[k] = match vol.get(day, inst) {
                    Some(e) if e.sigma2_combined > 0.0 => e.sigma2_combined.sqrt(),
                    _ => {
                        let r: Vec<f64> = (lo..=day).filter_map(|d| panel.return_at(d, inst)).collect();
                        stats::std_sample(&r).filter(|s| *s > 0.0).unwrap_or(0.02)
                    }
                };
            }
        }
        Self { n_inst, adv_shares, adv_value, daily_vol }
    }

    pub fn adv_value(&self, day: usize, inst: usize) -> f64 {
        self.adv_value[day * self.n_inst + inst]
    }

    pub fn daily_vol(&self, day: usize, inst: usize) -> f64 {
        self.daily_vol[day * self.n_inst + inst]
    }
}

impl Liquidity for PanelLiquidity {
    fn at(&self, day: usize, inst: usize) -> (f64, f64) {
        let k = day * self.n_inst + inst;
        (self.adv_shares[k], self.daily_vol[k])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub points: Vec<GridPoint>,
    pub optimum: RegimeOptimum,
    pub n_entries: usize,
}

/// Everything the daily strategy reads, fitted walk-forward.
pub struct Prepared<'a> {
    pub panel: &'a Panel,
    pub cfg: RunConfig,
    pub split: ResolvedSplit,
    pub store: FeatureStore,
    pub vol: VolSurface,
    pub opening: OpeningPanel,
    pub liquidity: PanelLiquidity,
    pub models: Vec<TrainedModel>,
    pub retrain_days: Vec<usize>,
    /// Rank scores by day, for the validation and test spans.
    pub scores: Vec<Option<Vec<RankScore>>>,
    pub hmm: Option<HmmFit<f64>>,
    /// Online regime label per day.
    pub regimes: Vec<Option<usize>>,
    pub grid: Option<GridOutcome>,
    /// Smoothed exit parameters per test day.
    pub exit_path: Vec<Option<ExitParams>>,
    pub timing: Vec<Option<TimingSignal>>,
    pub timing_models: Vec<(usize, BoostedEnsemble<f64>)>,
    pub flags: BTreeMap<String, usize>,
}

fn bump(flags: &mut BTreeMap<String, usize>, key: &str) {
    *flags.entry(key.to_string()).or_default() += 1;
}

impl<'a> Prepared<'a> {
    /// Fits the pipeline. Stages switched off in `toggles` are skipped
    /// where nothing downstream needs them.
    pub fn build(panel: &'a Panel, cfg: &RunConfig, toggles: ModuleToggles) -> Result<Self, Error> {
        cfg.validate()?;
        let split = cfg.split.resolve(panel)?;
        let mut flags = BTreeMap::new();
        let store = FeatureStore::build(panel, &cfg.universe, &cfg.features);
        let vol = VolSurface::build(panel, &cfg.volatility)?;
        let opening = OpeningPanel::build(panel, &vol, &ZeroSentiment);
        let liquidity = PanelLiquidity::build(panel, &vol);

        let retrain_days: Vec<usize> =
            (split.validation_start..=split.test_end).step_by(cfg.backtest.retrain_every).collect();
        let n_days = panel.n_days();
        let mut scores = vec![None; n_days];
        let mut models = Vec::new();
        if toggles.cross_sectional || toggles.grid {
            let dates: Vec<_> = retrain_days.iter().map(|&d| panel.calendar()[d]).collect();
            models = train_walk_forward(panel, &store, &dates, &cfg.network)?;
            let temperature = cfg.network.temperature;
            let computed: Vec<(usize, Option<Vec<RankScore>>)> = (split.validation_start..=split.test_end)
                .into_par_iter()
                .map(|day| {
                    let k = retrain_days.partition_point(|&r| r <= day) - 1;
                    let s = store.get(day).and_then(|df| predict_scores(&models[k].params, &df.features, temperature).ok());
                    (day, s)
                })
                .collect();
            for (day, s) in computed {
                scores[day] = s;
            }
        }

        // Regimes from the stress level, fitted on data up to the end of validation.
        let levels: Vec<Option<f64>> = (0..n_days).map(|d| vol.stress(d).map(|s| s.level)).collect();
        let first = levels.iter().position(|l| l.is_some());
        let mut regimes = vec![None; n_days];
        let mut hmm = None;
        if let Some(first) = first {
            let contiguous = levels[first..].iter().take_while(|l| l.is_some()).count();
            let fit_obs: Vec<f64> = levels[first..=split.validation_end.min(first + contiguous - 1)].iter().flatten().copied().collect();
            if fit_obs.len() >= MIN_HMM_OBS {
                let fit = fit_regime_hmm(&fit_obs, derive_seed(cfg.seed, STREAM_HMM))?;
                if fit.degenerate {
                    bump(&mut flags, "hmm_degenerate");
                }
                let obs: Vec<f64> = levels[first..first + contiguous].iter().flatten().copied().collect();
                for (k, s) in viterbi_online(&fit.model, &obs).into_iter().enumerate() {
                    regimes[first + k] = Some(s);
                }
                hmm = Some(fit);
            } else {
                bump(&mut flags, "hmm_unavailable");
            }
        }

        let mut prepared = Prepared {
            panel,
            cfg: cfg.clone(),
            split,
            store,
            vol,
            opening,
            liquidity,
            models,
            retrain_days,
            scores,
            hmm,
            regimes,
            grid: None,
            exit_path: vec![None; n_days],
            timing: vec![None; n_days],
            timing_models: Vec::new(),
            flags,
        };
        if toggles.grid {
            prepared.run_grid_search()?;
        }
        prepared.build_exit_path();
        if toggles.timing {
            prepared.fit_timing()?;
        }
        Ok(prepared)
    }

    fn run_grid_search(&mut self) -> Result<(), Error> {
        let s = self.split;
        // Exit rules are judged on the ranked picks alone; the opening gate
        // passes too few names per day to separate grid points.
        let ranked = ModuleToggles { cross_sectional: true, ..ModuleToggles::none() };
        let mut entries = Vec::new();
        for day in s.validation_start..s.validation_end {
            let (cands, _) = self.candidates(day, ranked, &BTreeSet::new());
            for &(inst, _) in cands.iter().take(self.cfg.exits.entries_per_day) {
                if let Some(b) = self.panel.bar(day + 1, inst).filter(|b| b.is_tradable()) {
                    entries.push(EntryRecord { instrument: inst, entry_day: day + 1, entry_price: b.open });
                }
            }
        }
        let grid = enumerate_grid(&self.cfg.exits.grid)?;
        let window = self.panel.truncate_after(s.validation_end);
        let labels: Vec<Option<usize>> = (0..window.n_days())
            .map(|d| if d >= s.validation_start { self.regimes[d] } else { None })
            .collect();
        let eval = GridEvalConfig { slot: self.cfg.exits.slot_fraction, ..GridEvalConfig::default() };
        match optimize_per_regime(&window, &entries, &grid, &self.cfg.exits.objective, &labels, &eval) {
            Ok((points, optimum)) => {
                for r in 0..N_STATES {
                    if optimum.inherited[r] {
                        bump(&mut self.flags, &format!("grid_regime{r}_inherits_global"));
                    }
                }
                self.grid = Some(GridOutcome { points, optimum, n_entries: entries.len() });
            }
            Err(crate::exitgrid::ExitError::Unavailable(_)) => bump(&mut self.flags, "grid_unavailable"),
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    fn build_exit_path(&mut self) {
        let Some(g) = &self.grid else {
            return;
        };
        let mut prev = g.optimum.global;
        for day in self.split.test_start - 1..=self.split.test_end {
            let target = self.regimes[day].map_or(g.optimum.global, |r| g.optimum.per_regime[r]);
            prev = smooth_params(&target, &prev);
            self.exit_path[day] = Some(prev);
        }
    }

    fn fit_timing(&mut self) -> Result<(), Error> {
        let builder = TimingFeatureBuilder::new(self.panel);
        let s = self.split;
        let h = self.cfg.timing.horizon;
        let feats: Vec<Option<Vec<f64>>> = (0..=s.test_end).map(|d| builder.features_at(d).ok().map(|f| f.to_vec())).collect();
        let mut refits: Vec<usize> = vec![s.test_start - 1];
        refits.extend(self.retrain_days.iter().copied().filter(|&d| d >= s.test_start));
        let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        let fitted: Vec<Option<(usize, BoostedEnsemble<f64>)>> = refits
            .par_iter()
            .map(|&r| {
                let mut x = Vec::new();
                let mut y = Vec::new();
                let mut reg = Vec::new();
                for d in 0..r.saturating_sub(h).saturating_add(1).min(r) {
                    if d + h > r {
                        break;
                    }
                    if let (Some(f), Some(lbl)) = (&feats[d], builder.forward_return(d, h)) {
                        x.push(f.clone());
                        y.push(lbl);
                        reg.push(self.regimes[d].unwrap_or(0));
                    }
                }
                if y.len() < 2 {
                    return Ok(None);
                }
                let sd = stats::std_sample(&y).unwrap_or(0.0);
                if sd > 0.0 {
                    for v in y.iter_mut() {
                        *v /= sd;
                    }
                }
                fit_timing_model(&x, &y, &reg, N_STATES, names.clone(), &self.cfg.timing.boost).map(|m| Some((r, m)))
            })
            .collect::<Result<_, _>>()?;
        self.timing_models = fitted.into_iter().flatten().collect();
        for day in s.test_start - 1..=s.test_end {
            let k = self.timing_models.partition_point(|(r, _)| *r <= day);
            let (Some(f), true) = (&feats[day], k > 0) else {
                bump(&mut self.flags, "timing_unavailable");
                continue;
            };
            let model = &self.timing_models[k - 1].1;
            let z = self.vol.stress(day).map_or(0.0, |st| st.zscore);
            let regime = self.regimes[day].unwrap_or(0);
            let sig = timing_signal(self.panel.calendar()[day], model, f, regime, self.cfg.timing.betas, z, 0.0);
            if sig.fallback {
                bump(&mut self.flags, "timing_regime_fallback");
            }
            self.timing[day] = Some(sig);
        }
        Ok(())
    }

    /// Entry candidates for a decision at the close of `day`, highest
    /// priority first, skipping instruments in `held`.
    pub fn candidates(&self, day: usize, toggles: ModuleToggles, held: &BTreeSet<usize>) -> (Vec<(usize, f64)>, Vec<String>) {
        let mut flags = Vec::new();
        let Some(df) = self.store.get(day) else {
            flags.push("empty_universe".into());
            return (Vec::new(), flags);
        };
        let members = &df.universe.indices;
        let priority: Vec<f64> = if toggles.cross_sectional {
            match &self.scores[day] {
                Some(s) if s.len() == members.len() => s.iter().map(|r| r.rank_prob).collect(),
                _ => {
                    flags.push("scores_unavailable".into());
                    return (Vec::new(), flags);
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(self.cfg.seed, STREAM_BASELINE), day as u64));
            members.iter().map(|_| rng.random::<f64>()).collect()
        };
        let mut pass: Vec<bool> = vec![true; members.len()];
        if toggles.opening {
            let dm = self.opening.day_model(self.panel, day, members, &self.cfg.opening);
            match &dm.gmm {
                None => {
                    flags.push("mixture_unavailable".into());
                    pass.iter_mut().for_each(|p| *p = false);
                }
                Some(gmm) => {
                    let psi = stats::quantile(&priority, self.cfg.opening.psi_quantile).unwrap_or(0.0);
                    let th = dm.thresholds(&self.cfg.opening, psi);
                    let pos: BTreeMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
                    pass.iter_mut().for_each(|p| *p = false);
                    for (inst, sig) in &dm.signals {
                        let k = pos[inst];
                        let rs = RankScore { instrument_id: sig.instrument_id.clone(), raw_score: priority[k], rank_prob: priority[k] };
                        pass[k] = entry_decision(sig, &gmm.params, &th, &rs, self.cfg.opening.tail_mode);
                    }
                }
            }
        }
        let mut ranked: Vec<(usize, f64, bool)> =
            members.iter().zip(&priority).zip(&pass).map(|((i, s), p)| (*i, *s, *p)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let top = ((members.len() as f64 * self.cfg.backtest.top_fraction).ceil() as usize).max(1);
        let out = ranked
            .into_iter()
            .take(top)
            .filter(|(i, _, p)| *p && !held.contains(i))
            .map(|(i, s, _)| (i, s))
            .collect();
        (out, flags)
    }

    fn equal_weights(&self, n: usize, budget: f64) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        vec![(budget / n as f64).min(self.cfg.sizing.constraints.w_max); n]
    }

    /// Constrained sleeve weights for new entries. Returns the weights (same
    /// order as `cands`, possibly shorter when names were dropped) and flags.
    fn sized_weights(&self, day: usize, cands: &[(usize, f64)], budget: f64, equity: f64) -> (Vec<(usize, f64)>, Vec<String>) {
        let mut flags = Vec::new();
        let cs = &self.cfg.sizing.constraints;
        let panel = self.panel;
        let score_sum: f64 = cands.iter().map(|c| c.1).sum();
        let mut raw: Vec<(usize, f64)> = Vec::new();
        for &(inst, score) in cands {
            let Some(bar) = panel.bar(day, inst) else { continue };
            let past = day.checked_sub(MOMENTUM_WINDOW).and_then(|d| panel.close(d, inst));
            let Some(past) = past.filter(|p| *p > 0.0) else { continue };
            let inputs = SizingInputs {
                instrument_id: panel.instruments()[inst].clone(),
                score: if score_sum > 0.0 { score / score_sum } else { 1.0 },
                market_cap: bar.market_cap,
                momentum: bar.close / past,
                adv: self.liquidity.adv_value(day, inst),
                volatility: self.liquidity.daily_vol(day, inst) * 252f64.sqrt(),
                target_volume: equity * cs.w_max,
            };
            if let Some(w) = base_weight(&inputs, self.cfg.sizing.lambda) {
                let lf = liquidity_factor(inputs.target_volume, inputs.adv, self.cfg.sizing.max_participation, self.cfg.sizing.liquidity_mode);
                if w * lf > 0.0 && (w * lf).is_finite() {
                    raw.push((inst, w * lf));
                }
            }
        }
        if raw.is_empty() {
            return (Vec::new(), flags);
        }
        // Keep as many names as the budget can carry at w_min.
        let max_names = if cs.w_min > 0.0 { (budget / cs.w_min).floor() as usize } else { raw.len() };
        raw.truncate(max_names.max(1));

        // Large-cap = top fraction of the day's universe by market cap.
        let caps: Vec<(f64, usize)> = self
            .store
            .get(day)
            .map(|df| df.universe.indices.iter().filter_map(|&i| panel.bar(day, i).map(|b| (b.market_cap, i))).collect())
            .unwrap_or_default();
        let mut sorted = caps.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let n_large = (sorted.len() as f64 * cs.largecap_fraction).ceil() as usize;
        let large_set: BTreeSet<usize> = sorted.iter().take(n_large).map(|c| c.1).collect();

        let attempt = |names: &[(usize, f64)], relax_large: bool, relax_sector: bool| {
            let b = budget.min(names.len() as f64 * cs.w_max);
            let sleeve = ConstraintSet {
                budget: b,
                sector_cap: if relax_sector { b } else { cs.sector_cap.min(b) },
                largecap_min: if relax_large { 0.0 } else { cs.largecap_min * b },
                largecap_max: if relax_large { b } else { cs.largecap_max * b },
                ..cs.clone()
            };
            let raw_w: Vec<f64> = names.iter().map(|n| n.1).collect();
            let sectors: Vec<usize> = names.iter().map(|n| panel.sector(n.0).index()).collect();
            let large: Vec<bool> = names.iter().map(|n| large_set.contains(&n.0)).collect();
            project_weights(&raw_w, &sectors, &large, &sleeve)
                .ok()
                .map(|p| names.iter().map(|n| n.0).zip(p.weights).collect::<Vec<(usize, f64)>>())
        };
        for (relax_large, relax_sector) in [(false, false), (true, false), (true, true)] {
            let mut names = raw.clone();
            while !names.is_empty() {
                if let Some(w) = attempt(&names, relax_large, relax_sector) {
                    if relax_large {
                        flags.push("largecap_bounds_relaxed".into());
                    }
                    if relax_sector {
                        flags.push("sector_cap_relaxed".into());
                    }
                    if names.len() < raw.len() {
                        flags.push("names_dropped_for_feasibility".into());
                    }
                    return (w, flags);
                }
                if relax_sector {
                    break;
                }
                names.pop();
            }
        }
        flags.push("projection_failed_equal_weights".into());
        let eq = self.equal_weights(raw.len(), budget);
        (raw.iter().map(|r| r.0).zip(eq).collect(), flags)
    }

    /// The strategy's decision at the close of `day`.
    pub fn decide(&self, day: usize, state: &PortfolioState, toggles: ModuleToggles) -> Decision {
        let bt = &self.cfg.backtest;
        let held: BTreeSet<usize> = state.positions.values().map(|p| p.instrument).collect();
        let mut meta = DecisionMeta {
            regime: self.regimes[day],
            exposure_multiplier: 1.0,
            exit_params: None,
            ..DecisionMeta::default()
        };
        let params = if toggles.grid {
            self.exit_path[day].unwrap_or_else(|| {
                meta.flags.push("grid_params_unavailable".into());
                self.cfg.exits.default_params
            })
        } else {
            self.cfg.exits.default_params
        };
        meta.exit_params = Some(params);
        let slots = bt.max_positions.saturating_sub(held.len());
        let (mut cands, flags) = self.candidates(day, toggles, &held);
        meta.flags.extend(flags);
        cands.truncate(slots);
        if held.len() + cands.len() < bt.min_positions {
            meta.flags.push("below_position_band".into());
        }
        meta.candidates = cands.iter().map(|(i, s)| (self.panel.instruments()[*i].clone(), *s)).collect();
        let equity = state.equity;
        let invested = state.market_value() / equity;
        let budget = (bt.gross_target - invested).max(0.0);
        if cands.is_empty() || budget <= 0.0 {
            return Decision { orders: Vec::new(), meta };
        }

        let weighted: Vec<(usize, f64)> = if toggles.sizing {
            let (w, f) = self.sized_weights(day, &cands, budget, equity);
            meta.flags.extend(f);
            w
        } else {
            let eq = self.equal_weights(cands.len(), budget);
            cands.iter().map(|c| c.0).zip(eq).collect()
        };
        let mut pw = PortfolioWeights {
            date: self.panel.calendar()[day],
            weights: weighted.iter().map(|(i, w)| (self.panel.instruments()[*i].clone(), *w)).collect(),
            flags: Default::default(),
            scale: 1.0,
        };
        if toggles.sizing {
            let z = self.vol.stress(day).map_or(0.0, |s| s.zscore);
            pw = volatility_scale(&pw, z, self.cfg.sizing.constraints.w_max);
        }
        if toggles.timing {
            match &self.timing[day] {
                Some(sig) => {
                    meta.exposure_multiplier = sig.exposure_multiplier;
                    pw = apply_timing_filter(&pw, sig);
                }
                None => meta.flags.push("timing_unavailable".into()),
            }
        }
        let index: BTreeMap<&InstrumentId, usize> = weighted.iter().map(|(i, _)| (&self.panel.instruments()[*i], *i)).collect();
        let mut orders = Vec::new();
        for (inst, _) in &weighted {
            let id = &self.panel.instruments()[*inst];
            let w = pw.weights[id];
            let notional = w * equity;
            if notional >= bt.min_order_notional {
                orders.push(EntryOrder { instrument: index[id], notional, params });
            }
        }
        meta.targets = pw.weights;
        Decision { orders, meta }
    }
}

/// Runs the engine over the test span with the prepared models.
pub fn run_prepared(prep: &Prepared<'_>, toggles: ModuleToggles, label: &str) -> Result<BacktestReport, Error> {
    let s = prep.split;
    let bt = &prep.cfg.backtest;
    let ecfg = EngineConfig { initial_equity: bt.initial_equity, lot_size: bt.lot_size };
    let start = s.test_start.checked_sub(1).ok_or_else(|| Error::Config("test span starts on the first day".into()))?;
    let out = run_engine(prep.panel, start, s.test_end, &ecfg, &prep.cfg.costs, &prep.liquidity, |day, state| {
        prep.decide(day, state, toggles)
    })?;
    let mut cfg = prep.cfg.clone();
    cfg.modules = toggles;
    Ok(BacktestReport::assemble(label, &cfg, prep, out))
}

/// Fits the pipeline and runs the configured backtest.
pub fn run_backtest(panel: &Panel, cfg: &RunConfig) -> Result<BacktestReport, Error> {
    let prep = Prepared::build(panel, cfg, cfg.modules)?;
    run_prepared(&prep, cfg.modules, "backtest")
}
