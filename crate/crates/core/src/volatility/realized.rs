use crate::scalar::Real;

/// Mean of squared returns over the trailing `window` (variance units).
/// `None` when the window is shorter than 2 or history is insufficient.
pub fn realized_vol<T: Real>(returns: &[T], window: usize) -> Option<T> {
    if window < 2 || returns.len() < window {
        return None;
    }
    let tail = &returns[returns.len() - window..];
    Some(tail.iter().map(|&r| r * r).sum::<T>() / T::from_usize_lossy(window))
}
