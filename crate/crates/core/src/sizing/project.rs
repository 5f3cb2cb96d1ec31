//! Tracking-error projection onto the position, sector, large-cap and budget
//! constraints.
//!
//! The minimizer of Σ(w − t)² has the form
//! `w_i = clip(t_i − ν − μ_s(i) − ζ·large_i, w_min, w_max)` with a budget
//! multiplier ν, nonnegative sector multipliers μ_s and a signed large-cap
//! multiplier ζ. Each sector multiplier is solved exactly for given (ν, ζ),
//! ν is bisected for the budget and ζ for whichever large-cap bound binds.

use serde::{Deserialize, Serialize};

use super::SizingError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSet {
    pub w_min: f64,
    pub w_max: f64,
    pub sector_cap: f64,
    pub largecap_min: f64,
    pub largecap_max: f64,
    /// Fraction of the universe, by market cap, counted as large-cap.
    pub largecap_fraction: f64,
    pub budget: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self {
            w_min: 0.005,
            w_max: 0.02,
            sector_cap: 0.25,
            largecap_min: 0.20,
            largecap_max: 0.60,
            largecap_fraction: 0.30,
            budget: 1.0,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<(), SizingError> {
        let ok = 0.0 <= self.w_min
            && self.w_min < self.w_max
            && self.sector_cap > 0.0
            && 0.0 <= self.largecap_min
            && self.largecap_min < self.largecap_max
            && (0.0..=1.0).contains(&self.largecap_fraction)
            && self.budget > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SizingError::Config(format!("inconsistent constraint set {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LargeCapBinding {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingFlags {
    pub at_w_min: usize,
    pub at_w_max: usize,
    /// Sector labels whose cap binds.
    pub sectors: Vec<usize>,
    pub largecap: Option<LargeCapBinding>,
}

#[derive(Debug, Clone)]
pub struct Projection<T> {
    pub weights: Vec<T>,
    pub flags: BindingFlags,
}

struct Problem<'a, T> {
    target: Vec<T>,
    sectors: &'a [usize],
    large: &'a [bool],
    selected: Vec<bool>,
    n_sectors: usize,
    lo: T,
    hi: T,
    cap: T,
}

impl<T: Real> Problem<'_, T> {
    fn weight(&self, i: usize, nu: T, zeta: T, mu: &[T]) -> T {
        if !self.selected[i] {
            return T::zero();
        }
        let z = if self.large[i] { zeta } else { T::zero() };
        (self.target[i] - nu - mu[self.sectors[i]] - z).max(self.lo).min(self.hi)
    }

    /// Exact sector multipliers for given (ν, ζ): the sector sum is piecewise
    /// linear and non-increasing in μ, so μ is found by locating the bracket
    /// of breakpoints around the cap and interpolating.
    fn sector_multipliers(&self, nu: T, zeta: T) -> Vec<T> {
        let mut mu = vec![T::zero(); self.n_sectors];
        for (s, m) in mu.iter_mut().enumerate() {
            let base: Vec<T> = (0..self.target.len())
                .filter(|&i| self.selected[i] && self.sectors[i] == s)
                .map(|i| self.target[i] - nu - if self.large[i] { zeta } else { T::zero() })
                .collect();
            if base.is_empty() {
                continue;
            }
            let sum_at = |m: T| -> T { base.iter().map(|&b| (b - m).max(self.lo).min(self.hi)).sum() };
            if sum_at(T::zero()) <= self.cap {
                continue;
            }
            let mut knots: Vec<T> = base
                .iter()
                .flat_map(|&b| [b - self.hi, b - self.lo])
                .filter(|&k| k > T::zero())
                .collect();
            knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
            let (mut a, mut fa) = (T::zero(), sum_at(T::zero()));
            for k in knots {
                let fk = sum_at(k);
                if fk <= self.cap {
                    // linear on [a, k]
                    *m = if fa > fk { a + (fa - self.cap) * (k - a) / (fa - fk) } else { k };
                    break;
                }
                a = k;
                fa = fk;
            }
        }
        mu
    }

    fn totals(&self, nu: T, zeta: T) -> (T, T, Vec<T>) {
        let mu = self.sector_multipliers(nu, zeta);
        let mut total = T::zero();
        let mut large = T::zero();
        for i in 0..self.target.len() {
            let w = self.weight(i, nu, zeta, &mu);
            total += w;
            if self.large[i] {
                large += w;
            }
        }
        (total, large, mu)
    }

    /// ν such that the budget holds, for fixed ζ.
    fn solve_nu(&self, zeta: T, budget: T) -> T {
        let span = self.target.iter().fold(T::zero(), |m, &t| m.max(t.abs())) + self.hi + zeta.abs() + T::one();
        bisect(-span, span, |nu| self.totals(nu, zeta).0 > budget)
    }
}

/// Bisection on a monotone predicate that is true at `a` and false at `b`;
/// returns the right end of the final bracket.
fn bisect<T: Real>(mut a: T, mut b: T, above: impl Fn(T) -> bool) -> T {
    for _ in 0..400 {
        let mid = (a + b) * T::lit(0.5);
        if mid <= a || mid >= b {
            break;
        }
        if above(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    b
}

/// Projects raw weights (zero means unselected) onto the constraint set.
/// `sectors[i]` is a dense sector label, `large[i]` marks large-cap names.
pub fn project_weights<T: Real>(
    raw: &[T],
    sectors: &[usize],
    large: &[bool],
    cs: &ConstraintSet,
) -> Result<Projection<T>, SizingError> {
    cs.validate()?;
    let n = raw.len();
    if sectors.len() != n || large.len() != n {
        return Err(SizingError::Shape(format!("{n} weights, {} sectors, {} large-cap flags", sectors.len(), large.len())));
    }
    if raw.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(SizingError::Shape("raw weights must be finite and nonnegative".into()));
    }
    let selected: Vec<bool> = raw.iter().map(|&w| w > T::zero()).collect();
    let n_sel = selected.iter().filter(|&&s| s).count();
    if n_sel == 0 {
        return Ok(Projection { weights: vec![T::zero(); n], flags: BindingFlags::default() });
    }
    let budget = T::lit(cs.budget);
    let raw_sum: T = raw.iter().copied().sum();
    let target: Vec<T> = raw.iter().map(|&w| w / raw_sum * budget).collect();
    let n_sectors = sectors.iter().max().map_or(0, |m| m + 1);
    let p = Problem {
        target,
        sectors,
        large,
        selected,
        n_sectors,
        lo: T::lit(cs.w_min),
        hi: T::lit(cs.w_max),
        cap: T::lit(cs.sector_cap),
    };
    let tol = T::lit(1e-9);

    // aggregate feasibility
    let mut per_sector = vec![0usize; n_sectors];
    for i in (0..n).filter(|&i| p.selected[i]) {
        per_sector[sectors[i]] += 1;
    }
    for (s, &k) in per_sector.iter().enumerate() {
        if T::from_usize_lossy(k) * p.lo > p.cap + tol {
            return Err(SizingError::Infeasible(format!("sector {s}: {k} names at w_min exceed the sector cap")));
        }
    }
    let max_total: T = per_sector.iter().map(|&k| (T::from_usize_lossy(k) * p.hi).min(p.cap)).sum();
    let min_total = T::from_usize_lossy(n_sel) * p.lo;
    if budget > max_total + tol || budget < min_total - tol {
        return Err(SizingError::Infeasible(format!(
            "budget {} outside attainable range [{min_total}, {max_total}]",
            cs.budget
        )));
    }

    let (l_min, l_max) = (T::lit(cs.largecap_min), T::lit(cs.largecap_max));
    let n_large = (0..n).filter(|&i| p.selected[i] && large[i]).count();
    let n_large_t = T::from_usize_lossy(n_large);
    if n_large_t * p.lo > l_max + tol || n_large_t * p.hi < l_min - tol {
        return Err(SizingError::Infeasible(format!("large-cap: {n_large} selected names cannot meet the bounds")));
    }
    if n_large == n_sel && (budget < l_min - tol || budget > l_max + tol) {
        return Err(SizingError::Infeasible("large-cap: every selected name is large-cap".into()));
    }
    let large_at = |zeta: T| -> (T, T) {
        let nu = p.solve_nu(zeta, budget);
        (nu, p.totals(nu, zeta).1)
    };
    let (nu0, l0) = large_at(T::zero());
    let (nu, zeta, binding) = if l0 > l_max + tol {
        let mut b = T::one();
        while large_at(b).1 > l_max {
            b = b * T::lit(2.0);
            if b > T::lit(1e6) {
                return Err(SizingError::Infeasible("large-cap maximum cannot be met".into()));
            }
        }
        let z = bisect(T::zero(), b, |z| large_at(z).1 > l_max);
        (p.solve_nu(z, budget), z, Some(LargeCapBinding::Upper))
    } else if l0 < l_min - tol {
        let mut b = -T::one();
        while large_at(b).1 < l_min {
            b = b * T::lit(2.0);
            if b < T::lit(-1e6) {
                return Err(SizingError::Infeasible("large-cap minimum cannot be met".into()));
            }
        }
        // predicate must be true on the left end: larger ζ means less large-cap weight
        let z = bisect(b, T::zero(), |z| large_at(z).1 > l_min);
        (p.solve_nu(z, budget), z, Some(LargeCapBinding::Lower))
    } else {
        (nu0, T::zero(), None)
    };

    let mu = p.sector_multipliers(nu, zeta);
    let weights: Vec<T> = (0..n).map(|i| p.weight(i, nu, zeta, &mu)).collect();
    let flags = BindingFlags {
        at_w_min: (0..n).filter(|&i| p.selected[i] && weights[i] <= p.lo).count(),
        at_w_max: (0..n).filter(|&i| p.selected[i] && weights[i] >= p.hi).count(),
        sectors: (0..n_sectors).filter(|&s| mu[s] > T::zero()).collect(),
        largecap: binding,
    };
    let out = Projection { weights, flags };
    check_feasible(&out.weights, &p, budget, l_min, l_max, T::lit(1e-8))?;
    Ok(out)
}

fn check_feasible<T: Real>(w: &[T], p: &Problem<'_, T>, budget: T, l_min: T, l_max: T, tol: T) -> Result<(), SizingError> {
    let total: T = w.iter().copied().sum();
    if (total - budget).abs() > tol {
        return Err(SizingError::Infeasible(format!("budget: weights sum to {total}")));
    }
    let mut sector_sum = vec![T::zero(); p.n_sectors];
    let mut large = T::zero();
    for i in 0..w.len() {
        sector_sum[p.sectors[i]] += w[i];
        if p.large[i] {
            large += w[i];
        }
    }
    if let Some(s) = sector_sum.iter().position(|&v| v > p.cap + tol) {
        return Err(SizingError::Infeasible(format!("sector {s} above cap")));
    }
    if large < l_min - tol || large > l_max + tol {
        return Err(SizingError::Infeasible(format!("large-cap: weight {large} outside bounds")));
    }
    Ok(())
}
