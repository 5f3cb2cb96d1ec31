//! Small statistical helpers used across modules.

use crate::scalar::Real;

pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len()))
}

/// Population variance (divides by `n`).
pub fn variance_pop<T: Real>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some(ss / T::from_usize_lossy(xs.len()))
}

/// Sample variance (divides by `n - 1`).
pub fn variance_sample<T: Real>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some(ss / T::from_usize_lossy(xs.len() - 1))
}

pub fn std_pop<T: Real>(xs: &[T]) -> Option<T> {
    variance_pop(xs).map(Float::sqrt)
}

pub fn std_sample<T: Real>(xs: &[T]) -> Option<T> {
    variance_sample(xs).map(Float::sqrt)
}

use num_traits::Float;

/// Linear-interpolation quantile of an already sorted slice (Hyndman-Fan type 7).
pub fn quantile_sorted<T: Real>(sorted: &[T], q: T) -> Option<T> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    if n == 1 {
        return Some(sorted[0]);
    }
    let q = q.max(T::zero()).min(T::one());
    let h = q * T::from_usize_lossy(n - 1);
    let lo = h.floor();
    let lo_i = lo.to_usize().unwrap_or(0).min(n - 1);
    let hi_i = (lo_i + 1).min(n - 1);
    let frac = h - lo;
    Some(sorted[lo_i] + frac * (sorted[hi_i] - sorted[lo_i]))
}

/// Nearest-order-statistic quantile of a sorted slice: the element at rank
/// `round(q (n - 1))`. Clamping a sample to such quantiles is idempotent.
pub fn quantile_nearest_sorted<T: Real>(sorted: &[T], q: T) -> Option<T> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let q = q.max(T::zero()).min(T::one());
    let h = (q * T::from_usize_lossy(n - 1)).round();
    Some(sorted[h.to_usize().unwrap_or(0).min(n - 1)])
}

/// Quantile of an unsorted slice; NaNs are not expected.
pub fn quantile<T: Real>(xs: &[T], q: T) -> Option<T> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    quantile_sorted(&v, q)
}

/// Standard normal CDF.
///
/// Hart's double-precision rational approximation (as arranged by West, 2005);
/// absolute error below 1e-14 over the real line.
pub fn normal_cdf<T: Real>(x: T) -> T {
    let xf = x.to_f64_lossy();
    let xa = xf.abs();
    let tail = if xa > 37.0 {
        0.0
    } else {
        let e = (-xa * xa / 2.0).exp();
        if xa < 7.071_067_811_865_47 {
            let mut num = 3.526_249_659_989_11e-2 * xa + 0.700_383_064_443_688;
            num = num * xa + 6.373_962_203_531_65;
            num = num * xa + 33.912_866_078_383;
            num = num * xa + 112.079_291_497_871;
            num = num * xa + 221.213_596_169_931;
            num = num * xa + 220.206_867_912_376;
            let mut den = 8.838_834_764_831_84e-2 * xa + 1.755_667_163_182_64;
            den = den * xa + 16.064_177_579_207;
            den = den * xa + 86.780_732_202_946_1;
            den = den * xa + 296.564_248_779_674;
            den = den * xa + 637.333_633_378_831;
            den = den * xa + 793.826_512_519_948;
            den = den * xa + 440.413_735_824_752;
            e * num / den
        } else {
            let mut b = xa + 0.65;
            b = xa + 4.0 / b;
            b = xa + 3.0 / b;
            b = xa + 2.0 / b;
            b = xa + 1.0 / b;
            e / b / 2.506_628_274_631
        }
    };
    T::lit(if xf > 0.0 { 1.0 - tail } else { tail })
}

pub fn normal_pdf<T: Real>(x: T, mu: T, sigma: T) -> T {
    let z = (x - mu) / sigma;
    (-(z * z) / T::lit(2.0)).exp() / (sigma * (T::TAU()).sqrt())
}

pub fn normal_log_pdf<T: Real>(x: T, mu: T, sigma: T) -> T {
    let z = (x - mu) / sigma;
    -(z * z) / T::lit(2.0) - sigma.ln() - T::lit(0.5) * T::TAU().ln()
}

pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex<T: Real>(v: &[T]) -> Vec<T> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let mut css = T::zero();
    let mut theta = T::zero();
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - T::one()) / T::from_usize_lossy(j + 1);
        if uj - t > T::zero() {
            theta = t;
        }
    }
    let mut w: Vec<T> = v.iter().map(|&x| (x - theta).max(T::zero())).collect();
    let s: T = w.iter().copied().sum();
    if s > T::zero() {
        for x in &mut w {
            *x /= s;
        }
    }
    w
}

/// Sample skewness (population moments); `None` for constant input.
pub fn skewness<T: Real>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    let n = T::from_usize_lossy(xs.len());
    let m2: T = xs.iter().map(|&x| (x - m).powi(2)).sum::<T>() / n;
    if m2 <= T::zero() {
        return None;
    }
    let m3: T = xs.iter().map(|&x| (x - m).powi(3)).sum::<T>() / n;
    Some(m3 / m2.powf(T::lit(1.5)))
}
