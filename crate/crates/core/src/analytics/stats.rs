use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("delay statistics need at least one sample")]
    Empty,
    #[error("delay samples must be finite and non-negative")]
    InvalidSample,
}

/// Summary of a list of delays, in seconds. Variance is the population
/// variance; `p95` is the nearest-rank 95th percentile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub variance: f64,
    pub stddev: f64,
    pub p95: f64,
}

pub fn compute_delay_stats(deltas: &[f64]) -> Result<DelayStats, StatsError> {
    if deltas.is_empty() {
        return Err(StatsError::Empty);
    }
    if deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(StatsError::InvalidSample);
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    // Welford keeps the variance stable for long runs of near-equal deltas.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in deltas.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let min = sorted[0];
    let max = sorted[n - 1];
    // Rounding can push the running mean a hair outside [min, max].
    let mean = mean.clamp(min, max);
    let variance = if n == 1 {
        0.0
    } else {
        (m2 / n as f64).max(0.0)
    };
    Ok(DelayStats {
        count: n,
        mean,
        min,
        max,
        variance,
        stddev: variance.sqrt(),
        p95: nearest_rank(&sorted, 95.0),
    })
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)`, 1-based.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}
