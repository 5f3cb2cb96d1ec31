//! Three-component Gaussian mixture fitted by EM with a penalty pulling the
//! mixture weights towards 1/3.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OpeningError;
use crate::scalar::Real;
use crate::stats::{self, log_sum_exp, normal_cdf, normal_log_pdf};

pub const MIN_GMM_SAMPLES: usize = 10;
pub const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams<T> {
    pub weights: [T; 3],
    pub means: [T; 3],
    pub stdevs: [T; 3],
    pub lambda: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmFit<T> {
    pub params: GmmParams<T>,
    /// Penalized objective at the initial parameters and after every iteration.
    pub trace: Vec<T>,
    pub converged: bool,
    /// Set when some stdev hit the floor.
    pub floored: bool,
}

impl<T: Real> GmmParams<T> {
    pub fn log_density(&self, x: T) -> T {
        let terms = self.component_log_terms(x);
        log_sum_exp(&terms)
    }

    fn component_log_terms(&self, x: T) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for k in 0..3 {
            out[k] = self.weights[k].ln() + normal_log_pdf(x, self.means[k], self.stdevs[k]);
        }
        out
    }

    /// Posterior component probabilities for an observation.
    pub fn responsibilities(&self, x: T) -> [T; 3] {
        let terms = self.component_log_terms(x);
        let lse = log_sum_exp(&terms);
        let mut r = [T::zero(); 3];
        for k in 0..3 {
            r[k] = (terms[k] - lse).exp();
        }
        r
    }

    /// Σ_k π_k (1 − Φ((θ − μ_k)/σ_k)).
    pub fn tail_probability(&self, theta: T) -> T {
        self.tail_with(&self.weights, theta)
    }

    /// Tail probability with component weights replaced by the posterior
    /// responsibilities of `x`.
    pub fn posterior_tail_probability(&self, x: T, theta: T) -> T {
        self.tail_with(&self.responsibilities(x), theta)
    }

    fn tail_with(&self, w: &[T; 3], theta: T) -> T {
        (0..3).map(|k| w[k] * (T::one() - normal_cdf((theta - self.means[k]) / self.stdevs[k]))).sum()
    }

    /// Negative log-likelihood plus λ Σ|π_k − 1/3|.
    pub fn objective(&self, xs: &[T]) -> T {
        let nll: T = -xs.iter().map(|&x| self.log_density(x)).sum::<T>();
        let third = T::one() / T::lit(3.0);
        nll + self.lambda * self.weights.iter().map(|&p| (p - third).abs()).sum::<T>()
    }
}

/// Maximizes Σ n_k ln π_k − λ Σ|π_k − 1/3| over the floored simplex.
///
/// For a multiplier ν the stationary point of each coordinate is
/// n_k/(ν+λ) above 1/3, n_k/(ν−λ) below 1/3, or 1/3 itself; the coordinate
/// map is non-increasing in ν, so ν is found by bisection on Σ π_k = 1.
pub fn penalized_weights<T: Real>(counts: &[T; 3], lambda: T) -> [T; 3] {
    let floor = T::lit(WEIGHT_FLOOR);
    let third = T::one() / T::lit(3.0);
    let coord = |n: T, nu: T| -> T {
        let up = n / (nu + lambda);
        let v = if up > third {
            up
        } else if nu > lambda && n / (nu - lambda) < third {
            n / (nu - lambda)
        } else {
            third
        };
        v.max(floor)
    };
    let total = |nu: T| -> T { counts.iter().map(|&n| coord(n, nu)).sum() };
    let n_sum: T = counts.iter().copied().sum();
    if lambda == T::zero() && n_sum > T::zero() {
        let mut w = [T::zero(); 3];
        for k in 0..3 {
            w[k] = (counts[k] / n_sum).max(floor);
        }
        let s: T = w.iter().copied().sum();
        return w.map(|v| v / s);
    }
    // total(lo) > 1 ≥ total(hi)
    let mut lo = -lambda;
    let mut hi = T::lit(3.0) * n_sum + lambda + T::one();
    while total(hi) > T::one() {
        hi = hi * T::lit(2.0) + T::one();
    }
    for _ in 0..300 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = [coord(counts[0], hi), coord(counts[1], hi), coord(counts[2], hi)];
    let s: T = w.iter().copied().sum();
    w.map(|v| v / s)
}

/// Fits from quantile-based starting means (1/6, 1/2, 5/6) with a small
/// seeded jitter.
pub fn fit_gmm_em<T: Real>(xs: &[T], lambda: T, seed: u64, max_iter: usize, tol: T) -> Result<GmmFit<T>, OpeningError> {
    check_sample(xs, lambda)?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let sd = stats::std_pop(xs).expect("non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = [T::zero(); 3];
    for (k, q) in [1.0 / 6.0, 0.5, 5.0 / 6.0].iter().enumerate() {
        let jitter = T::lit(rng.random_range(-0.01..0.01)) * sd;
        means[k] = stats::quantile_sorted(&sorted, T::lit(*q)).expect("non-empty") + jitter;
    }
    let floor = sigma_floor(sd);
    let s0 = (sd / T::lit(2.0)).max(floor);
    let third = T::one() / T::lit(3.0);
    let init = GmmParams { weights: [third; 3], means, stdevs: [s0; 3], lambda };
    fit_gmm_em_from(xs, init, max_iter, tol)
}

fn sigma_floor<T: Real>(sd: T) -> T {
    (sd * T::lit(1e-3)).max(T::lit(1e-12))
}

fn check_sample<T: Real>(xs: &[T], lambda: T) -> Result<(), OpeningError> {
    if xs.len() < MIN_GMM_SAMPLES {
        return Err(OpeningError::Fit(format!("need at least {MIN_GMM_SAMPLES} samples, got {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(OpeningError::Fit("non-finite sample".into()));
    }
    if !(lambda >= T::zero()) {
        return Err(OpeningError::Fit("lambda must be nonnegative".into()));
    }
    Ok(())
}

/// EM iterations from explicit starting parameters.
pub fn fit_gmm_em_from<T: Real>(xs: &[T], init: GmmParams<T>, max_iter: usize, tol: T) -> Result<GmmFit<T>, OpeningError> {
    check_sample(xs, init.lambda)?;
    let floor = sigma_floor(stats::std_pop(xs).expect("non-empty"));
    let mut p = init;
    let mut floored = false;
    for s in p.stdevs.iter_mut() {
        if *s < floor {
            *s = floor;
            floored = true;
        }
    }
    let mut trace = vec![p.objective(xs)];
    let mut converged = false;
    let mut resp = vec![[T::zero(); 3]; xs.len()];
    for _ in 0..max_iter {
        for (r, &x) in resp.iter_mut().zip(xs) {
            *r = p.responsibilities(x);
        }
        let mut counts = [T::zero(); 3];
        let mut sums = [T::zero(); 3];
        for (r, &x) in resp.iter().zip(xs) {
            for k in 0..3 {
                counts[k] += r[k];
                sums[k] += r[k] * x;
            }
        }
        let mut next = p;
        next.weights = penalized_weights(&counts, p.lambda);
        for k in 0..3 {
            if counts[k] > T::zero() {
                next.means[k] = sums[k] / counts[k];
                let ss: T = resp.iter().zip(xs).map(|(r, &x)| r[k] * (x - next.means[k]) * (x - next.means[k])).sum();
                let sd = (ss / counts[k]).sqrt();
                if !(sd >= floor) {
                    floored = true;
                }
                next.stdevs[k] = if sd >= floor { sd } else { floor };
            }
        }
        let obj = next.objective(xs);
        let prev = *trace.last().expect("trace starts with the initial objective");
        p = next;
        trace.push(obj);
        if (prev - obj).abs() <= tol * (T::one() + obj.abs()) {
            converged = true;
            break;
        }
    }
    Ok(GmmFit { params: p, trace, converged, floored })
}
