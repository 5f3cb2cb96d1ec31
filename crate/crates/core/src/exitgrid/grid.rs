use serde::{Deserialize, Serialize};

use super::ExitError;

/// Exit rule parameters. Fractions are returns relative to the entry price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitParams {
    pub profit_take: f64,
    pub stop_loss: f64,
    /// Trading days, the entry day being day 1.
    pub max_hold: u32,
    pub trailing_activation: f64,
}

impl ExitParams {
    pub fn validate(&self) -> Result<(), ExitError> {
        let positive = self.profit_take > 0.0 && self.stop_loss > 0.0 && self.max_hold > 0 && self.trailing_activation > 0.0;
        if positive && self.profit_take.is_finite() && self.stop_loss.is_finite() && self.trailing_activation.is_finite() {
            Ok(())
        } else {
            Err(ExitError::Config(format!("exit parameters must be positive: {self:?}")))
        }
    }
}

impl Default for ExitParams {
    fn default() -> Self {
        Self { profit_take: 0.03, stop_loss: 0.015, max_hold: 9, trailing_activation: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub pt_levels: Vec<f64>,
    pub sl_levels: Vec<f64>,
    pub mhp_levels: Vec<u32>,
    pub tsa_levels: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            pt_levels: vec![0.010, 0.015, 0.020, 0.025, 0.030, 0.040, 0.050, 0.060],
            sl_levels: vec![0.008, 0.010, 0.012, 0.015, 0.020, 0.025, 0.030],
            mhp_levels: vec![3, 5, 7, 9, 12, 15],
            tsa_levels: vec![0.015, 0.020, 0.025, 0.030],
        }
    }
}

impl GridSpec {
    /// Two levels per dimension, used for quick end-to-end runs.
    pub fn reduced() -> Self {
        Self {
            pt_levels: vec![0.02, 0.04],
            sl_levels: vec![0.01, 0.02],
            mhp_levels: vec![5, 9],
            tsa_levels: vec![0.02, 0.03],
        }
    }

    /// The one-point grid at `p`.
    pub fn singleton(p: &ExitParams) -> Self {
        Self {
            pt_levels: vec![p.profit_take],
            sl_levels: vec![p.stop_loss],
            mhp_levels: vec![p.max_hold],
            tsa_levels: vec![p.trailing_activation],
        }
    }
}

fn sorted_levels(v: &[f64], name: &str) -> Result<Vec<f64>, ExitError> {
    if v.is_empty() {
        return Err(ExitError::Config(format!("{name} is empty")));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(ExitError::Config(format!("{name} levels must be positive")));
    }
    let mut out = v.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));
    out.dedup();
    Ok(out)
}

/// Cartesian product in lexicographic (pt, sl, mhp, tsa) order, each level
/// list sorted ascending.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<ExitParams>, ExitError> {
    let pts = sorted_levels(&spec.pt_levels, "pt_levels")?;
    let sls = sorted_levels(&spec.sl_levels, "sl_levels")?;
    let tsas = sorted_levels(&spec.tsa_levels, "tsa_levels")?;
    let mut mhps = spec.mhp_levels.clone();
    if mhps.is_empty() || mhps.contains(&0) {
        return Err(ExitError::Config("mhp_levels must be non-empty and positive".into()));
    }
    mhps.sort_unstable();
    mhps.dedup();
    let mut out = Vec::with_capacity(pts.len() * sls.len() * mhps.len() * tsas.len());
    for &profit_take in &pts {
        for &stop_loss in &sls {
            for &max_hold in &mhps {
                for &trailing_activation in &tsas {
                    out.push(ExitParams { profit_take, stop_loss, max_hold, trailing_activation });
                }
            }
        }
    }
    Ok(out)
}

/// 0.7 · regime value + 0.3 · previous value; max_hold rounded, at least 1.
/// Written as `b + 0.7 (a - b)` so equal inputs come back unchanged.
pub fn smooth_params(regime: &ExitParams, previous: &ExitParams) -> ExitParams {
    let mix = |a: f64, b: f64| b + 0.7 * (a - b);
    ExitParams {
        profit_take: mix(regime.profit_take, previous.profit_take),
        stop_loss: mix(regime.stop_loss, previous.stop_loss),
        max_hold: (mix(regime.max_hold as f64, previous.max_hold as f64).round() as u32).max(1),
        trailing_activation: mix(regime.trailing_activation, previous.trailing_activation),
    }
}
