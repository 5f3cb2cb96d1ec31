//! Temperature softmax ranking and the combined listwise/regression loss.

use super::NetError;
use crate::scalar::Real;
use crate::stats;

/// Softmax of `scores / temperature` with max subtraction.
pub fn rank_probabilities<T: Real>(scores: &[T], temperature: T) -> Result<Vec<T>, NetError> {
    if scores.is_empty() {
        return Err(NetError::Domain("rank probabilities of an empty list".into()));
    }
    if !(temperature > T::zero()) {
        return Err(NetError::Domain(format!("temperature must be positive, got {temperature}")));
    }
    Ok(softmax(scores, temperature))
}

pub(crate) fn softmax<T: Real>(xs: &[T], temperature: T) -> Vec<T> {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = xs.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let total: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Loss value and gradient with respect to the raw scores.
///
/// The ranking part is the cross-entropy between the softmax of the scores
/// and the softmax of the standardized returns; the regression part is the
/// mean squared error between scores and returns.
pub fn combined_loss<T: Real>(scores: &[T], returns: &[T], alpha: T) -> Result<(T, Vec<T>), NetError> {
    if scores.len() != returns.len() {
        return Err(NetError::Shape(format!("{} scores vs {} returns", scores.len(), returns.len())));
    }
    if scores.len() < 2 {
        return Err(NetError::Shape("combined loss needs at least two instruments".into()));
    }
    let n = T::from_usize_lossy(scores.len());
    let mean = stats::mean(returns).expect("non-empty");
    let sd = stats::std_pop(returns).expect("non-empty");
    let standardized: Vec<T> = if sd > T::zero() {
        returns.iter().map(|&r| (r - mean) / sd).collect()
    } else {
        vec![T::zero(); returns.len()]
    };
    let target = softmax(&standardized, T::one());
    let p = softmax(scores, T::one());

    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let log_z = max + scores.iter().map(|&s| (s - max).exp()).sum::<T>().ln();
    let ranking: T = target.iter().zip(scores).map(|(&q, &s)| -q * (s - log_z)).sum();
    let regression: T = scores.iter().zip(returns).map(|(&s, &r)| (s - r) * (s - r)).sum::<T>() / n;
    let loss = alpha * ranking + (T::one() - alpha) * regression;

    let two = T::lit(2.0);
    let grad = (0..scores.len())
        .map(|i| alpha * (p[i] - target[i]) + (T::one() - alpha) * two * (scores[i] - returns[i]) / n)
        .collect();
    Ok((loss, grad))
}
