//! Bootstrap particle filter for a log-variance AR(1) stochastic volatility
//! model: `h_t = mu + rho (h_{t-1} - mu) + eta e_t`, `r_t ~ N(0, exp(h_t))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::VolError;
use crate::scalar::Real;

pub const MIN_PARTICLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvConfig {
    pub n_particles: usize,
    pub rho: f64,
    pub eta: f64,
}

impl Default for SvConfig {
    fn default() -> Self {
        Self { n_particles: 200, rho: 0.97, eta: 0.15 }
    }
}

/// Streaming filter state.
#[derive(Debug, Clone)]
pub struct SvFilter<T> {
    pub mu: T,
    rho: T,
    eta: T,
    particles: Vec<T>,
    log_w: Vec<T>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvStep<T> {
    /// Posterior mean of `exp(h_t)` given returns through `t`.
    pub variance: T,
    /// Effective sample size after the (optional) resampling step.
    pub ess: T,
    pub resampled: bool,
}

#[derive(Debug, Clone)]
pub struct SvPath<T> {
    pub variance: Vec<T>,
    pub ess: Vec<T>,
    pub resampled: Vec<bool>,
}

impl<T: Real> SvFilter<T> {
    pub fn new(cfg: &SvConfig, mu: T, seed: u64) -> Result<Self, VolError> {
        if cfg.n_particles < MIN_PARTICLES {
            return Err(VolError::Config(format!("need at least {MIN_PARTICLES} particles, got {}", cfg.n_particles)));
        }
        if !(cfg.rho.abs() < 1.0) || !(cfg.eta > 0.0) || !mu.is_finite() {
            return Err(VolError::Config("SV requires |rho| < 1, eta > 0 and finite mu".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = cfg.eta / (1.0 - cfg.rho * cfg.rho).sqrt();
        let particles = (0..cfg.n_particles)
            .map(|_| mu + T::lit(sd * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Ok(Self {
            mu,
            rho: T::lit(cfg.rho),
            eta: T::lit(cfg.eta),
            particles,
            log_w: vec![T::zero(); cfg.n_particles],
            rng,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    /// Propagates, weights by the observed return and resamples when the
    /// effective sample size drops below half the particle count.
    pub fn step(&mut self, r: T) -> SvStep<T> {
        let half = T::lit(0.5);
        for (h, lw) in self.particles.iter_mut().zip(self.log_w.iter_mut()) {
            let e: f64 = self.rng.sample(StandardNormal);
            *h = self.mu + self.rho * (*h - self.mu) + self.eta * T::lit(e);
            *lw += -half * (*h + r * r / h.exp());
        }
        let max = self.log_w.iter().copied().fold(T::neg_infinity(), T::max);
        let mut w: Vec<T> = self.log_w.iter().map(|&l| (l - max).exp()).collect();
        let total: T = w.iter().copied().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let variance = w.iter().zip(&self.particles).map(|(&wi, &h)| wi * h.exp()).sum();
        let ess = T::one() / w.iter().map(|&x| x * x).sum::<T>();
        let n = self.particles.len();
        if ess < T::from_usize_lossy(n) * half {
            self.resample(&w);
            return SvStep { variance, ess: self.ess(), resampled: true };
        }
        for (lw, &wi) in self.log_w.iter_mut().zip(&w) {
            *lw = wi.ln();
        }
        SvStep { variance, ess, resampled: false }
    }

    fn resample(&mut self, w: &[T]) {
        let n = self.particles.len();
        let nn = T::from_usize_lossy(n);
        let u0 = T::lit(self.rng.random::<f64>()) / nn;
        let mut out = Vec::with_capacity(n);
        let mut cum = w[0];
        let mut j = 0;
        for i in 0..n {
            let u = u0 + T::from_usize_lossy(i) / nn;
            while u > cum && j + 1 < n {
                j += 1;
                cum += w[j];
            }
            out.push(self.particles[j]);
        }
        self.particles = out;
        self.log_w.iter_mut().for_each(|l| *l = -nn.ln());
    }

    /// Effective sample size of the current weights.
    pub fn ess(&self) -> T {
        let max = self.log_w.iter().copied().fold(T::neg_infinity(), T::max);
        let w: Vec<T> = self.log_w.iter().map(|&l| (l - max).exp()).collect();
        let total: T = w.iter().copied().sum();
        T::one() / w.iter().map(|&x| (x / total) * (x / total)).sum::<T>()
    }
}

/// Runs the filter over a full return series. `mu` defaults to the log of the
/// mean squared return.
pub fn particle_filter_sv<T: Real>(returns: &[T], cfg: &SvConfig, mu: Option<T>, seed: u64) -> Result<SvPath<T>, VolError> {
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(VolError::Data("non-finite return".into()));
    }
    let mu = match mu {
        Some(m) => m,
        None => default_mu(returns)?,
    };
    let mut f = SvFilter::new(cfg, mu, seed)?;
    let mut path = SvPath { variance: Vec::new(), ess: Vec::new(), resampled: Vec::new() };
    for &r in returns {
        let s = f.step(r);
        path.variance.push(s.variance);
        path.ess.push(s.ess);
        path.resampled.push(s.resampled);
    }
    Ok(path)
}

/// Log of the mean squared return.
pub fn default_mu<T: Real>(returns: &[T]) -> Result<T, VolError> {
    if returns.is_empty() {
        return Err(VolError::InsufficientData { needed: 1, got: 0 });
    }
    let ms = returns.iter().map(|&r| r * r).sum::<T>() / T::from_usize_lossy(returns.len());
    if !(ms > T::zero()) {
        return Err(VolError::Degenerate("zero mean squared return".into()));
    }
    Ok(ms.ln())
}
