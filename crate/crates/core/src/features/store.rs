use std::collections::VecDeque;

use rayon::prelude::*;

use super::{compute_raw_features_at, forward_fill_decay, sector_standardize, winsorize, FeatureConfig, FeaturePanel};
use crate::marketdata::{build_universe_at, Panel, Sector, UniverseRules, UniverseSnapshot};

/// Universe and fully preprocessed features for one day.
#[derive(Debug, Clone)]
pub struct DayFeatures {
    pub universe: UniverseSnapshot,
    pub features: FeaturePanel,
}

/// Preprocessed feature panels for every calendar day of a panel.
///
/// Day `t` depends only on bars dated ≤ `t`.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    days: Vec<Option<DayFeatures>>,
}

impl FeatureStore {
    pub fn build(panel: &Panel, rules: &UniverseRules, cfg: &FeatureConfig) -> Self {
        let standardized: Vec<Option<(UniverseSnapshot, FeaturePanel)>> = (0..panel.n_days())
            .into_par_iter()
            .map(|day| {
                let universe = build_universe_at(panel, day, rules);
                if universe.is_empty() {
                    return None;
                }
                let raw = compute_raw_features_at(panel, day, &universe);
                let sectors: Vec<Sector> = universe
                    .indices
                    .iter()
                    .map(|&i| panel.bar(day, i).map(|b| b.sector).unwrap_or_else(|| panel.sector(i)))
                    .collect();
                let w = winsorize(&raw, cfg.winsor_lower, cfg.winsor_upper);
                Some((universe, sector_standardize(&w, &sectors, cfg.epsilon)))
            })
            .collect();

        let keep = (5.0 * cfg.fill_halflife).ceil() as usize + 1;
        let mut window: VecDeque<FeaturePanel> = VecDeque::with_capacity(keep + 1);
        let mut days = Vec::with_capacity(standardized.len());
        for entry in standardized {
            match entry {
                Some((universe, std_panel)) => {
                    window.push_back(std_panel);
                    if window.len() > keep {
                        window.pop_front();
                    }
                    let hist: Vec<FeaturePanel> = window.iter().cloned().collect();
                    let features = forward_fill_decay(&hist, cfg.fill_halflife);
                    days.push(Some(DayFeatures { universe, features }));
                }
                None => {
                    // empty universe: the day still counts toward the fill gap
                    window.push_back(FeaturePanel::empty(
                        panel.calendar()[days.len()],
                        Vec::new(),
                        Vec::new(),
                    ));
                    if window.len() > keep {
                        window.pop_front();
                    }
                    days.push(None);
                }
            }
        }
        Self { days }
    }

    pub fn get(&self, day: usize) -> Option<&DayFeatures> {
        self.days.get(day).and_then(Option::as_ref)
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }
}
