//! Binomial confidence intervals.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `errors` successes in `trials` at 95%.
pub fn wilson(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo.min(p), hi.max(p))
}

/// A Monte Carlo error-rate estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub decoder: String,
    pub n: usize,
    pub rate: f64,
    pub trials: u64,
    pub errors: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl ErrorEstimate {
    pub fn new(decoder: impl Into<String>, n: usize, rate: f64, trials: u64, errors: u64, seed: u64) -> Self {
        let (ci_lo, ci_hi) = wilson(errors, trials);
        ErrorEstimate {
            decoder: decoder.into(),
            n,
            rate,
            trials,
            errors,
            estimate: if trials == 0 { 0.0 } else { errors as f64 / trials as f64 },
            ci_lo,
            ci_hi,
            seed,
        }
    }
}
