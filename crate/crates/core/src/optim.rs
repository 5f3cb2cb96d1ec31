//! Derivative-free minimization used by the likelihood fits.

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex search with standard coefficients.
///
/// `step` is the initial edge length along every axis. Stops when the spread
/// of simplex values falls below `tol` or after `max_iter` iterations.
pub fn nelder_mead<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    step: T,
    tol: T,
    max_iter: usize,
) -> NelderMeadResult<T> {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut eval = |x: &[T]| {
        let v = f(x);
        if v.is_nan() { T::infinity() } else { v }
    };
    let mut pts: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<T> = pts.iter().map(|p| eval(p)).collect();
    let mut it = 0;
    let mut converged = false;
    while it < max_iter {
        it += 1;
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= tol * (T::one() + vals[0].abs()) {
            converged = true;
            break;
        }
        let mut centroid = vec![T::zero(); n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += *v;
            }
        }
        let nn = T::from_usize_lossy(n);
        centroid.iter_mut().for_each(|c| *c /= nn);
        let along = |coef: T| -> Vec<T> {
            centroid.iter().zip(&pts[n]).map(|(&c, &w)| c + coef * (c - w)).collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(gamma);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(rho);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                let best = pts[0].clone();
                for k in 1..=n {
                    for (v, b) in pts[k].iter_mut().zip(&best) {
                        *v = *b + sigma * (*v - *b);
                    }
                    vals[k] = eval(&pts[k]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal)).unwrap_or(0);
    NelderMeadResult { x: pts[best].clone(), value: vals[best], iterations: it, converged }
}
