//! Exponentially decayed least squares for the signal weights.

use serde::{Deserialize, Serialize};

use super::OpeningError;
use crate::scalar::Real;

pub const MIN_WEIGHT_OBS: usize = 30;
pub const RIDGE_PENALTY: f64 = 1e-6;

/// Signal components observed on `day` and the following open-to-close return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalObservation<T> {
    pub day: usize,
    pub components: [T; 4],
    pub next_return: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEstimate<T> {
    pub alpha: [T; 4],
    /// Set when the normal equations were singular and the ridge path was used.
    pub ridge: bool,
}

/// Weighted least squares without intercept; observation weight is
/// `decay^(latest_day − day)`.
pub fn estimate_signal_weights<T: Real>(history: &[SignalObservation<T>], decay: T) -> Result<WeightEstimate<T>, OpeningError> {
    if history.len() < MIN_WEIGHT_OBS {
        return Err(OpeningError::Fit(format!("need at least {MIN_WEIGHT_OBS} observations, got {}", history.len())));
    }
    if !(decay > T::zero() && decay <= T::one()) {
        return Err(OpeningError::Fit("decay must lie in (0, 1]".into()));
    }
    let latest = history.iter().map(|o| o.day).max().expect("non-empty");
    let mut a = [[T::zero(); 4]; 4];
    let mut b = [T::zero(); 4];
    for o in history {
        let w = decay.powi((latest - o.day) as i32);
        for i in 0..4 {
            b[i] += w * o.components[i] * o.next_return;
            for j in 0..4 {
                a[i][j] += w * o.components[i] * o.components[j];
            }
        }
    }
    if let Some(alpha) = cholesky_solve(&a, &b) {
        return Ok(WeightEstimate { alpha, ridge: false });
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += T::lit(RIDGE_PENALTY);
    }
    let alpha = cholesky_solve(&a, &b).ok_or_else(|| OpeningError::Fit("ridge system not positive definite".into()))?;
    Ok(WeightEstimate { alpha, ridge: true })
}

/// Solves `a x = b` for symmetric `a`; `None` when a pivot is not clearly
/// positive relative to the diagonal scale.
fn cholesky_solve<T: Real>(a: &[[T; 4]; 4], b: &[T; 4]) -> Option<[T; 4]> {
    let scale = (0..4).map(|i| a[i][i].abs()).fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return None;
    }
    let tol = scale * T::lit(1e-12);
    let mut l = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > tol) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [T::zero(); 4];
    for i in 0..4 {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [T::zero(); 4];
    for i in (0..4).rev() {
        let mut s = y[i];
        for k in i + 1..4 {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}
