use serde::{Deserialize, Serialize};

use super::MetricError;

/// z for a two-sided 95 % normal interval.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosSummary {
    pub n: usize,
    pub mean: f64,
    pub ci95_half_width: f64,
}

/// Mean and normal-approximation 95 % half-width (1.96 s / sqrt(n), with s
/// the sample standard deviation). A single rating has half-width 0.
pub fn aggregate_mos(ratings: &[i64]) -> Result<MosSummary, MetricError> {
    if ratings.is_empty() {
        return Err(MetricError::NoRatings);
    }
    if let Some(&bad) = ratings.iter().find(|r| !(1..=5).contains(*r)) {
        return Err(MetricError::RatingOutOfRange(bad));
    }
    let n = ratings.len();
    let mean = ratings.iter().sum::<i64>() as f64 / n as f64;
    let half = if n < 2 {
        0.0
    } else {
        let ss: f64 = ratings.iter().map(|&r| (r as f64 - mean).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        Z95 * sd / (n as f64).sqrt()
    };
    Ok(MosSummary {
        n,
        mean,
        ci95_half_width: half,
    })
}
