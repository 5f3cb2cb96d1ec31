//! GARCH(1,1) quasi-maximum-likelihood fit.

use serde::{Deserialize, Serialize};

use super::VolError;
use crate::optim::nelder_mead;
use crate::scalar::Real;
use crate::stats;

/// Upper bound on alpha + beta.
pub const MAX_PERSISTENCE: f64 = 0.999;
pub const MIN_GARCH_OBS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams<T> {
    pub omega: T,
    pub alpha: T,
    pub beta: T,
}

#[derive(Debug, Clone)]
pub struct GarchFit<T> {
    pub params: GarchParams<T>,
    /// Conditional variance for each observation, `variance[0]` being the
    /// sample-variance initialization.
    pub variance: Vec<T>,
    pub log_likelihood: T,
    /// Set when the optimizer failed and the fixed fallback was used.
    pub fallback: bool,
}

impl<T: Real> GarchParams<T> {
    pub fn persistence(&self) -> T {
        self.alpha + self.beta
    }

    /// Variance for the day after the last observed return.
    pub fn step(&self, prev_var: T, prev_ret: T) -> T {
        self.omega + self.alpha * prev_ret * prev_ret + self.beta * prev_var
    }

    /// Variance path started from `init_var`; element `t` is the variance of
    /// return `t` given returns before it, plus one trailing forecast.
    pub fn filter(&self, returns: &[T], init_var: T) -> Vec<T> {
        let mut out = Vec::with_capacity(returns.len() + 1);
        let mut v = init_var;
        out.push(v);
        for &r in returns {
            v = self.step(v, r);
            out.push(v);
        }
        out
    }

    fn fallback(var: T) -> Self {
        Self { omega: var * T::lit(0.05), alpha: T::lit(0.05), beta: T::lit(0.90) }
    }
}

fn logistic<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

fn unpack<T: Real>(u: &[T]) -> GarchParams<T> {
    let persistence = T::lit(MAX_PERSISTENCE) * logistic(u[1]);
    let share = logistic(u[2]);
    GarchParams { omega: u[0].exp(), alpha: persistence * share, beta: persistence * (T::one() - share) }
}

fn neg_log_likelihood<T: Real>(p: &GarchParams<T>, returns: &[T], init_var: T) -> T {
    let mut v = init_var;
    let mut nll = T::zero();
    for &r in returns {
        if !(v > T::zero()) || !v.is_finite() {
            return T::infinity();
        }
        nll += v.ln() + r * r / v;
        v = p.step(v, r);
    }
    T::lit(0.5) * nll
}

/// Fits GARCH(1,1) by Nelder-Mead on a transformed parameter space that keeps
/// omega > 0 and alpha + beta ≤ 0.999, restarting from several points.
pub fn fit_garch<T: Real>(returns: &[T]) -> Result<GarchFit<T>, VolError> {
    fit_garch_from(returns, None)
}

/// As [`fit_garch`], but when `start` is given the search runs once from
/// those parameters instead of from the default restart set.
pub fn fit_garch_from<T: Real>(returns: &[T], start: Option<&GarchParams<T>>) -> Result<GarchFit<T>, VolError> {
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(VolError::Data("non-finite return".into()));
    }
    if returns.len() < MIN_GARCH_OBS {
        return Err(VolError::InsufficientData { needed: MIN_GARCH_OBS, got: returns.len() });
    }
    let var = stats::variance_pop(returns).expect("non-empty");
    if !(var > T::zero()) {
        return Err(VolError::Degenerate("returns have zero variance".into()));
    }
    let starts: Vec<[T; 3]> = match start {
        Some(p) => {
            let pers = (p.persistence() / T::lit(MAX_PERSISTENCE)).max(T::lit(1e-6)).min(T::lit(1.0 - 1e-6));
            let share = (p.alpha / p.persistence()).max(T::lit(1e-6)).min(T::lit(1.0 - 1e-6));
            vec![[p.omega.ln(), logit(pers), logit(share)]]
        }
        None => [(0.90, 0.10), (0.97, 0.08), (0.98, 0.05), (0.80, 0.30)]
            .iter()
            .map(|&(p, share)| {
                let p = T::lit(p);
                [(var * (T::one() - p)).ln(), logit(p / T::lit(MAX_PERSISTENCE)), logit(T::lit(share))]
            })
            .collect(),
    };
    let mut best: Option<(Vec<T>, T)> = None;
    for u0 in &starts {
        let r = nelder_mead(|u| neg_log_likelihood(&unpack(u), returns, var), u0, T::lit(0.5), T::lit(1e-10), 2000);
        if r.value.is_finite() && best.as_ref().is_none_or(|(_, v)| r.value < *v) {
            best = Some((r.x, r.value));
        }
    }
    let (params, fallback) = match best {
        Some((u, _)) => (unpack(&u), false),
        None => (GarchParams::fallback(var), true),
    };
    let variance = params.filter(returns, var);
    let log_likelihood = -neg_log_likelihood(&params, returns, var);
    Ok(GarchFit { params, variance, log_likelihood, fallback })
}

/// Fit, or the fixed fallback flagged as such when fitting is impossible but
/// the sample still has positive variance. Zero-variance input yields a tiny
/// floor variance so downstream consumers stay finite.
pub fn fit_garch_or_fallback<T: Real>(returns: &[T], start: Option<&GarchParams<T>>) -> GarchFit<T> {
    match fit_garch_from(returns, start) {
        Ok(f) => f,
        Err(_) => {
            let var = stats::variance_pop(returns).unwrap_or(T::zero()).max(T::lit(1e-10));
            let params = GarchParams::fallback(var);
            let variance = params.filter(returns, var);
            GarchFit { params, variance, log_likelihood: T::nan(), fallback: true }
        }
    }
}
