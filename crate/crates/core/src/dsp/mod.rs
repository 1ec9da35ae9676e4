//! Deterministic signal-processing stages: loudness normalization, pause
//! trimming, resampling and eligibility filtering.

mod eligibility;
mod loudness;
mod resample;
mod vad;
pub mod wav;

use thiserror::Error;

pub use eligibility::{check_eligibility, Eligibility, MAX_DURATION_S, MAX_TEXT_CHARS};
pub use loudness::{rms_dbfs, rms_normalize, Normalized, DEFAULT_TARGET_DBFS};
pub use resample::resample;
pub use vad::{classify_frames, trim_pauses, vad_supports_rate, VadConfig};

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("audio buffer is empty")]
    Empty,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("silent input, gain undefined")]
    SilentInput,
    #[error("unsupported sample rate {0} Hz for voice activity detection (use 8, 16, 32 or 48 kHz)")]
    UnsupportedRate(u32),
    #[error("invalid VAD config: {0}")]
    InvalidVadConfig(String),
}

/// Mono audio held as 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::ZeroSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFinite { index });
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
