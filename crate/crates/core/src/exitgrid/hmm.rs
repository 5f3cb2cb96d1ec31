//! Three-state Gaussian HMM over a daily volatility observable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExitError;
use crate::stats;
use crate::Real;

pub const N_STATES: usize = 3;
pub const MIN_HMM_OBS: usize = 100;
pub const HMM_TOL: f64 = 1e-6;
pub const HMM_MAX_ITER: usize = 500;
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    LowVol,
    NormalVol,
    HighVol,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::LowVol, Regime::NormalVol, Regime::HighVol];

    pub fn from_index(i: usize) -> Regime {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::LowVol => "LowVol",
            Regime::NormalVol => "NormalVol",
            Regime::HighVol => "HighVol",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel<T> {
    pub initial: [T; N_STATES],
    /// Row-stochastic, `transition[i][j]` = P(j | i).
    pub transition: [[T; N_STATES]; N_STATES],
    pub means: [T; N_STATES],
    pub stdevs: [T; N_STATES],
}

impl<T: Real> RegimeModel<T> {
    pub fn validate(&self) -> Result<(), ExitError> {
        let one = T::one();
        let tol = T::lit(1e-9);
        let row_ok = |r: &[T; N_STATES]| r.iter().all(|p| *p >= T::zero()) && (r.iter().copied().sum::<T>() - one).abs() <= tol;
        if !row_ok(&self.initial) || !self.transition.iter().all(row_ok) {
            return Err(ExitError::Config("HMM probabilities must lie on the simplex".into()));
        }
        if self.stdevs.iter().any(|s| !(*s > T::zero())) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(ExitError::Config("HMM emissions must be finite with positive stdev".into()));
        }
        Ok(())
    }

    fn log_emission(&self, x: T) -> [T; N_STATES] {
        std::array::from_fn(|k| stats::normal_log_pdf(x, self.means[k], self.stdevs[k]))
    }

    /// Scaled forward pass; returns the log-likelihood.
    pub fn log_likelihood(&self, obs: &[T]) -> T {
        let mut ll = T::zero();
        let mut alpha = [T::zero(); N_STATES];
        for (t, &x) in obs.iter().enumerate() {
            let le = self.log_emission(x);
            let shift = le.iter().copied().fold(T::neg_infinity(), T::max);
            let mut next = [T::zero(); N_STATES];
            for j in 0..N_STATES {
                let prior = if t == 0 {
                    self.initial[j]
                } else {
                    (0..N_STATES).map(|i| alpha[i] * self.transition[i][j]).sum()
                };
                next[j] = prior * (le[j] - shift).exp();
            }
            let c: T = next.iter().copied().sum();
            for v in next.iter_mut() {
                *v /= c;
            }
            ll += c.ln() + shift;
            alpha = next;
        }
        ll
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmFit<T> {
    pub model: RegimeModel<T>,
    pub loglik_trace: Vec<T>,
    pub converged: bool,
    /// Some emission stdev hit the floor; the states are not separated.
    pub degenerate: bool,
}

/// Baum-Welch with per-step scaling. Means start at the 1/6, 1/2 and 5/6
/// quantiles with a small seeded jitter; states are relabeled so the means
/// ascend.
pub fn fit_regime_hmm<T: Real>(obs: &[T], seed: u64) -> Result<HmmFit<T>, ExitError> {
    if obs.len() < MIN_HMM_OBS {
        return Err(ExitError::InsufficientData { needed: MIN_HMM_OBS, got: obs.len() });
    }
    if obs.iter().any(|x| !x.is_finite()) {
        return Err(ExitError::Data("non-finite HMM observation".into()));
    }
    let n = obs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = stats::std_pop(obs).expect("non-empty");
    let floor = T::lit(SIGMA_FLOOR);
    let mut sorted = obs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut means = [T::zero(); N_STATES];
    for (k, q) in [1.0 / 6.0, 0.5, 5.0 / 6.0].into_iter().enumerate() {
        let jitter = T::lit(rng.random_range(-0.01..0.01)) * sd;
        means[k] = stats::quantile_sorted(&sorted, T::lit(q)).expect("non-empty") + jitter;
    }
    let s0 = (sd * T::lit(0.5)).max(floor);
    let third = T::lit(1.0 / 3.0);
    let mut model = RegimeModel {
        initial: [third; N_STATES],
        transition: std::array::from_fn(|i| std::array::from_fn(|j| T::lit(if i == j { 0.9 } else { 0.05 }))),
        means,
        stdevs: [s0; N_STATES],
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut degenerate = false;
    let mut alpha = vec![[T::zero(); N_STATES]; n];
    let mut beta = vec![[T::zero(); N_STATES]; n];
    let mut emis = vec![[T::zero(); N_STATES]; n];
    let mut scale = vec![T::zero(); n];
    let mut shifts = vec![T::zero(); n];
    for _ in 0..HMM_MAX_ITER {
        // Emissions scaled by the per-step max to stay in range.
        for t in 0..n {
            let le = model.log_emission(obs[t]);
            let shift = le.iter().copied().fold(T::neg_infinity(), T::max);
            shifts[t] = shift;
            emis[t] = std::array::from_fn(|k| (le[k] - shift).exp());
        }
        for t in 0..n {
            let mut a = [T::zero(); N_STATES];
            for j in 0..N_STATES {
                let prior = if t == 0 {
                    model.initial[j]
                } else {
                    (0..N_STATES).map(|i| alpha[t - 1][i] * model.transition[i][j]).sum()
                };
                a[j] = prior * emis[t][j];
            }
            let c: T = a.iter().copied().sum();
            scale[t] = c;
            alpha[t] = a.map(|v| v / c);
        }
        let ll: T = (0..n).map(|t| scale[t].ln() + shifts[t]).sum();
        beta[n - 1] = [T::one(); N_STATES];
        for t in (0..n - 1).rev() {
            for i in 0..N_STATES {
                beta[t][i] = (0..N_STATES)
                    .map(|j| model.transition[i][j] * emis[t + 1][j] * beta[t + 1][j])
                    .sum::<T>()
                    / scale[t + 1];
            }
        }
        let done = trace.last().is_some_and(|prev: &T| (ll - *prev).abs() <= T::lit(HMM_TOL) * (T::one() + prev.abs()));
        trace.push(ll);
        if done {
            converged = true;
            break;
        }

        // M-step.
        let mut gamma_sum = [T::zero(); N_STATES];
        let mut gamma_x = [T::zero(); N_STATES];
        let mut xi = [[T::zero(); N_STATES]; N_STATES];
        let mut gamma_all = vec![[T::zero(); N_STATES]; n];
        for t in 0..n {
            let g: [T; N_STATES] = std::array::from_fn(|k| alpha[t][k] * beta[t][k]);
            let z: T = g.iter().copied().sum();
            let g = g.map(|v| v / z);
            for k in 0..N_STATES {
                gamma_sum[k] += g[k];
                gamma_x[k] += g[k] * obs[t];
            }
            gamma_all[t] = g;
            if t + 1 < n {
                for i in 0..N_STATES {
                    for j in 0..N_STATES {
                        xi[i][j] += alpha[t][i] * model.transition[i][j] * emis[t + 1][j] * beta[t + 1][j] / scale[t + 1];
                    }
                }
            }
        }
        let tiny = T::lit(1e-300);
        let mut next = model.clone();
        next.initial = gamma_all[0];
        for i in 0..N_STATES {
            let row: T = xi[i].iter().copied().sum();
            if row > tiny {
                next.transition[i] = xi[i].map(|v| v / row);
            }
            if gamma_sum[i] > tiny {
                let m = gamma_x[i] / gamma_sum[i];
                let var = (0..n).map(|t| gamma_all[t][i] * (obs[t] - m) * (obs[t] - m)).sum::<T>() / gamma_sum[i];
                next.means[i] = m;
                let s = var.sqrt();
                if !(s > floor) {
                    degenerate = true;
                    next.stdevs[i] = floor;
                } else {
                    next.stdevs[i] = s;
                }
            }
        }
        model = next;
    }
    if sd <= floor {
        degenerate = true;
    }
    Ok(HmmFit { model: relabel(&model), loglik_trace: trace, converged, degenerate })
}

/// Permutes states so the emission means ascend.
pub fn relabel<T: Real>(m: &RegimeModel<T>) -> RegimeModel<T> {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| m.means[a].partial_cmp(&m.means[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    RegimeModel {
        initial: order.map(|k| m.initial[k]),
        transition: order.map(|i| order.map(|j| m.transition[i][j])),
        means: order.map(|k| m.means[k]),
        stdevs: order.map(|k| m.stdevs[k]),
    }
}

/// Most probable state path, computed in log space. Ties go to the lower
/// state index.
pub fn viterbi_regime<T: Real>(model: &RegimeModel<T>, obs: &[T]) -> Vec<usize> {
    if obs.is_empty() {
        return Vec::new();
    }
    let n = obs.len();
    let log_a = model.transition.map(|r| r.map(|p| p.ln()));
    let le0 = model.log_emission(obs[0]);
    let mut delta: [T; N_STATES] = std::array::from_fn(|k| model.initial[k].ln() + le0[k]);
    let mut back = vec![[0usize; N_STATES]; n];
    for t in 1..n {
        let le = model.log_emission(obs[t]);
        let mut next = [T::neg_infinity(); N_STATES];
        for j in 0..N_STATES {
            let mut best = 0;
            let mut best_v = T::neg_infinity();
            for i in 0..N_STATES {
                let v = delta[i] + log_a[i][j];
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            next[j] = best_v + le[j];
            back[t][j] = best;
        }
        delta = next;
    }
    let mut last = 0;
    for k in 1..N_STATES {
        if delta[k] > delta[last] {
            last = k;
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

/// For each t, the final state of the Viterbi path over `obs[..=t]`. Each
/// entry depends only on observations up to t.
pub fn viterbi_online<T: Real>(model: &RegimeModel<T>, obs: &[T]) -> Vec<usize> {
    let mut out = Vec::with_capacity(obs.len());
    let log_a = model.transition.map(|r| r.map(|p| p.ln()));
    let mut delta = [T::neg_infinity(); N_STATES];
    for (t, &x) in obs.iter().enumerate() {
        let le = model.log_emission(x);
        delta = std::array::from_fn(|j| {
            let prior = if t == 0 {
                model.initial[j].ln()
            } else {
                (0..N_STATES).map(|i| delta[i] + log_a[i][j]).fold(T::neg_infinity(), T::max)
            };
            prior + le[j]
        });
        let mut best = 0;
        for k in 1..N_STATES {
            if delta[k] > delta[best] {
                best = k;
            }
        }
        out.push(best);
    }
    out
}
