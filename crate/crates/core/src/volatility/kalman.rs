//! Time-varying combination weights for the three variance forecasts.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::stats::project_simplex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    /// Observation noise variance in normalized units.
    pub obs_noise: f64,
    /// Random-walk state noise variance per weight.
    pub state_noise: f64,
    pub initial_cov: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { obs_noise: 2.0, state_noise: 1e-3, initial_cov: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combined<T> {
    pub weights: [T; 3],
    pub value: T,
}

/// Kalman filter regressing the next squared return on the three forecasts.
/// Inputs and target are divided by the mean forecast so the filter works on
/// a scale-free problem; weights are projected onto the simplex after every
/// update.
#[derive(Debug, Clone)]
pub struct KalmanCombiner<T> {
    w: [T; 3],
    p: [[T; 3]; 3],
    r: T,
    q: T,
}

impl<T: Real> KalmanCombiner<T> {
    pub fn new(cfg: &KalmanConfig) -> Self {
        let third = T::one() / T::lit(3.0);
        let mut p = [[T::zero(); 3]; 3];
        for (i, row) in p.iter_mut().enumerate() {
            row[i] = T::lit(cfg.initial_cov);
        }
        Self { w: [third; 3], p, r: T::lit(cfg.obs_noise), q: T::lit(cfg.state_noise) }
    }

    pub fn weights(&self) -> [T; 3] {
        self.w
    }

    pub fn combine(&self, x: [T; 3]) -> Combined<T> {
        let value = self.w[0] * x[0] + self.w[1] * x[1] + self.w[2] * x[2];
        Combined { weights: self.w, value }
    }

    /// Incorporates the realized squared return `y` that followed forecasts `x`.
    pub fn update(&mut self, x: [T; 3], y: T) {
        let m = (x[0] + x[1] + x[2]) / T::lit(3.0);
        if !(m > T::zero()) || !y.is_finite() {
            return;
        }
        let h = [x[0] / m, x[1] / m, x[2] / m];
        let z = y / m;
        for i in 0..3 {
            self.p[i][i] += self.q;
        }
        let mut ph = [T::zero(); 3];
        for i in 0..3 {
            ph[i] = self.p[i][0] * h[0] + self.p[i][1] * h[1] + self.p[i][2] * h[2];
        }
        let s = h[0] * ph[0] + h[1] * ph[1] + h[2] * ph[2] + self.r;
        let k = [ph[0] / s, ph[1] / s, ph[2] / s];
        let innov = z - (self.w[0] * h[0] + self.w[1] * h[1] + self.w[2] * h[2]);
        let raw = [self.w[0] + k[0] * innov, self.w[1] + k[1] * innov, self.w[2] + k[2] * innov];
        let mut new_p = self.p;
        for i in 0..3 {
            for j in 0..3 {
                new_p[i][j] = self.p[i][j] - k[i] * ph[j];
            }
        }
        // keep symmetric
        for i in 0..3 {
            for j in 0..i {
                let v = (new_p[i][j] + new_p[j][i]) * T::lit(0.5);
                new_p[i][j] = v;
                new_p[j][i] = v;
            }
        }
        self.p = new_p;
        let proj = project_simplex(&raw);
        self.w = [proj[0], proj[1], proj[2]];
    }
}

/// Batch form: output `t` uses weights fitted on pairs `(x_s, y_s)` with
/// `s < t`, where `next_sq[s]` is the squared return realized after `x_s`.
pub fn combine_vols<T: Real>(forecasts: &[[T; 3]], next_sq: &[Option<T>], cfg: &KalmanConfig) -> Vec<Combined<T>> {
    let mut kf = KalmanCombiner::new(cfg);
    let mut out = Vec::with_capacity(forecasts.len());
    for (t, &x) in forecasts.iter().enumerate() {
        out.push(kf.combine(x));
        if let Some(Some(y)) = next_sq.get(t) {
            kf.update(x, *y);
        }
    }
    out
}
