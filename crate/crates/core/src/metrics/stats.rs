use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Mean, sample standard deviation and two-sided 95% Student-t interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl SummaryStats {
    /// Interval from already-aggregated moments.
    pub fn from_moments(mean: f64, std: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Stats(format!("need at least 2 values for an interval, got {n}")));
        }
        if !(std >= 0.0 && mean.is_finite() && std.is_finite()) {
            return Err(Error::Stats(format!("invalid moments mean={mean}, std={std}")));
        }
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| Error::Stats(e.to_string()))?
            .inverse_cdf(0.975);
        let half = t * std / (n as f64).sqrt();
        Ok(Self { mean, std, ci_lo: mean - half, ci_hi: mean + half, n })
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Stats(format!("need at least 2 values, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    SummaryStats::from_moments(mean, var.sqrt(), n)
}
