//! Order statistics.

use crate::error::{Error, Result};

/// Nearest-rank percentile: the ⌈q/100·N⌉-th smallest value (1-based).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty list"));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::invalid(format!("percentile q must be in (0, 100], got {q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("percentile input contains NaN"));
    }
    let idx = nearest_rank(values.len(), q) - 1;
    let mut scratch = values.to_vec();
    let (_, v, _) = scratch.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*v)
}

/// 1-based nearest rank for `n` samples at percentile `q`.
pub fn nearest_rank(n: usize, q: f64) -> usize {
    // q·n first keeps integer products exact (3·100/100 = 3, not 3.0000000000000004)
    let rank = (q * n as f64 / 100.0).ceil() as usize;
    rank.clamp(1, n)
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
