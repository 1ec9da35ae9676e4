use super::{AudioBuffer, DspError};

pub const DEFAULT_TARGET_DBFS: f64 = -27.0;

/// Result of loudness normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub audio: AudioBuffer,
    pub gain: f64,
    /// Samples hard-clipped to ±1 after scaling.
    pub clipped: usize,
}

fn rms(samples: &[f32]) -> f64 {
    let sum: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    (sum / samples.len() as f64).sqrt()
}

/// Whole-buffer RMS level in dBFS (a full-scale sine reads -3.01).
pub fn rms_dbfs(a: &AudioBuffer) -> f64 {
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    20.0 * rms(a.samples()).log10()
}

/// Scales the buffer by a single gain so its RMS level hits `target_dbfs`.
pub fn rms_normalize(a: &AudioBuffer, target_dbfs: f64) -> Result<Normalized, DspError> {
    if a.is_empty() {
        return Err(DspError::Empty);
    }
    let current = rms(a.samples());
    if current == 0.0 {
        return Err(DspError::SilentInput);
    }
    let gain = 10f64.powf(target_dbfs / 20.0) / current;
    let mut clipped = 0;
    let samples = a
        .samples()
        .iter()
        .map(|&s| {
            let v = s as f64 * gain;
            if v.abs() > 1.0 {
                clipped += 1;
                v.signum() as f32
            } else {
                v as f32
            }
        })
        .collect();
    Ok(Normalized {
        audio: AudioBuffer::new(samples, a.sample_rate())?,
        gain,
        clipped,
    })
}
