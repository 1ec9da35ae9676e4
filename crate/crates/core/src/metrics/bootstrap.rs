use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricError;

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub mean_diff: f64,
    pub ci95: (f64, f64),
    pub significant: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn resampled_mean(xs: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let n = xs.len();
    (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

/// Percentile bootstrap CI for mean(a) - mean(b).
///
/// Resample `k` draws from its own ChaCha stream (`seed`, stream `k`), so the
/// result does not depend on how resamples are spread over threads.
pub fn bootstrap_diff(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, MetricError> {
    if a.is_empty() || b.is_empty() || resamples < 1000 {
        return Err(MetricError::BootstrapInput);
    }
    let mut diffs: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            resampled_mean(a, &mut rng) - resampled_mean(b, &mut rng)
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    let lo_idx = (0.025 * resamples as f64).floor() as usize;
    let hi_idx = ((0.975 * resamples as f64).ceil() as usize).saturating_sub(1);
    let ci95 = (diffs[lo_idx], diffs[hi_idx.min(resamples - 1)]);
    Ok(BootstrapResult {
        mean_diff: mean(a) - mean(b),
        ci95,
        significant: ci95.0 > 0.0 || ci95.1 < 0.0,
    })
}
