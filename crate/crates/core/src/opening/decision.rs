use serde::{Deserialize, Serialize};

use super::gmm::GmmParams;
use super::signal::OpeningSignal;
use crate::crosssection::RankScore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryThresholds {
    pub theta0: f64,
    pub beta: f64,
    pub theta_t: f64,
    pub phi_t: f64,
    pub psi: f64,
}

/// How the mixture tail is evaluated for one instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Mixture weights replaced by the posterior responsibilities of the
    /// instrument's own signal value.
    #[default]
    Posterior,
    /// Plain mixture weights; identical for every instrument on a date.
    Prior,
}

/// θ_t = θ_0 + β · recent realized volatility.
pub fn adapt_threshold(theta0: f64, beta: f64, recent_vol: f64) -> f64 {
    theta0 + beta * recent_vol
}

impl EntryThresholds {
    pub fn new(theta0: f64, beta: f64, recent_vol: f64, phi_t: f64, psi: f64) -> Self {
        Self { theta0, beta, theta_t: adapt_threshold(theta0, beta, recent_vol), phi_t, psi }
    }
}

pub fn tail_probability(signal: &OpeningSignal, gmm: &GmmParams<f64>, theta: f64, mode: TailMode) -> f64 {
    match mode {
        TailMode::Posterior => gmm.posterior_tail_probability(signal.value, theta),
        TailMode::Prior => gmm.tail_probability(theta),
    }
}

/// Enter iff the tail probability beats φ_t and the cross-sectional score beats ψ.
pub fn entry_decision(
    signal: &OpeningSignal,
    gmm: &GmmParams<f64>,
    thresholds: &EntryThresholds,
    cs_score: &RankScore,
    mode: TailMode,
) -> bool {
    if cs_score.rank_prob <= thresholds.psi {
        return false;
    }
    tail_probability(signal, gmm, thresholds.theta_t, mode) > thresholds.phi_t
}
