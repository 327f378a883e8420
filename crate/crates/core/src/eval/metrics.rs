//! Coverage metrics and normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("recall is undefined when the dataset has no targets")]
    NoTargets,
    #[error("distinct targets {found} exceed the {total} targets present")]
    TooMany { found: u64, total: u64 },
}

/// Fraction of all targets that were sampled.
pub fn recall(found: u64, total: u64) -> Result<f64, MetricError> {
    if total == 0 {
        return Err(MetricError::NoTargets);
    }
    if found > total {
        return Err(MetricError::TooMany { found, total });
    }
    Ok(found as f64 / total as f64)
}

/// Distinct targets over the most a budget could possibly return, `B·m`.
pub fn normalized_recall(found: u64, budget: u64, page_size: usize) -> f64 {
    let cap = budget as f64 * page_size as f64;
    if cap == 0.0 {
        0.0
    } else {
        found as f64 / cap
    }
}

/// Distinct targets per returned-result slot, `found / (B·k)`.
pub fn throughput_rate(found: u64, budget: u64, page_size: usize) -> f64 {
    normalized_recall(found, budget, page_size)
}

/// Mean and 95% two-sided interval `mean ± 1.96·sd/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    /// With fewer than two values the interval collapses onto the mean.
    pub fn from_values(values: &[f64]) -> Interval {
        let n = values.len();
        if n == 0 {
            return Interval { mean: f64::NAN, sd: f64::NAN, n, low: f64::NAN, high: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Interval { mean, sd: 0.0, n, low: mean, high: mean };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        let half = 1.96 * sd / (n as f64).sqrt();
        Interval { mean, sd, n, low: mean - half, high: mean + half }
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.low <= other.high && other.low <= self.high
    }

    pub fn half_width(&self) -> f64 {
        (self.high - self.low) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_examples() {
        assert_eq!(recall(0, 100).unwrap(), 0.0);
        assert_eq!(recall(100, 100).unwrap(), 1.0);
        assert_eq!(recall(7, 28).unwrap(), 0.25);
        assert_eq!(recall(1, 0), Err(MetricError::NoTargets));
        assert!(recall(5, 4).is_err());
    }

    #[test]
    fn normalized_examples() {
        assert_eq!(normalized_recall(50, 5, 10), 1.0);
        assert!((normalized_recall(7, 2, 10) - 0.35).abs() < 1e-15);
        assert_eq!(normalized_recall(0, 5, 10), 0.0);
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput_rate(10, 2, 20), 0.25);
        assert_eq!(throughput_rate(10, 1, 10), 1.0);
        assert_eq!(throughput_rate(0, 3, 10), 0.0);
    }

    #[test]
    fn interval_brackets_mean() {
        let ci = Interval::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ci.mean, 2.5);
        assert!(ci.low < 2.5 && ci.high > 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((ci.half_width() - 1.96 * sd / 2.0).abs() < 1e-12);
        let one = Interval::from_values(&[3.0]);
        assert_eq!((one.low, one.high), (3.0, 3.0));
        assert!(ci.overlaps(&one));
    }
}
