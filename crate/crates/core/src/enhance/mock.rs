//! Deterministic mock adapters: pure functions of the input bytes.

use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::dsp::{wav, AudioBuffer};
use crate::speaker::EMBEDDING_DIM;

const FFT_LEN: usize = 512;
const HOP: usize = 256;
const EPS: f64 = 1e-12;

/// Restorer kernels for modes 0, 1 and 2. Each sums to one.
pub const RESTORER_KERNELS: [&[f64]; 3] = [
    &[0.25, 0.5, 0.25],
    &[1.2, -0.2],
    &[0.1, 0.2, 0.4, 0.2, 0.1],
];

#[derive(Debug, Error)]
pub enum MockError {
    #[error("input is not a mono WAV: {0}")]
    BadInput(#[from] wav::WavError),
    #[error("restorer needs a mode")]
    MissingMode,
    #[error("unknown restorer mode {0}")]
    BadMode(u8),
    #[error("unknown mock '{0}'")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKind {
    /// Denoiser that echoes its input.
    Identity,
    /// Restorer applying one of [`RESTORER_KERNELS`].
    Fir,
    /// Quality estimator scoring `1 + 4·(1 − spectral flatness)`.
    Flatness,
    /// 256-dim log-spectrum embedder.
    Embedder,
}

impl FromStr for MockKind {
    type Err = MockError;

    fn from_str(s: &str) -> Result<Self, MockError> {
        match s {
            "identity" => Ok(MockKind::Identity),
            "fir" => Ok(MockKind::Fir),
            "flatness" => Ok(MockKind::Flatness),
            "embedder" => Ok(MockKind::Embedder),
            other => Err(MockError::UnknownKind(other.to_string())),
        }
    }
}

impl MockKind {
    pub fn run(self, input: &[u8], mode: Option<u8>) -> Result<Vec<u8>, MockError> {
        match self {
            MockKind::Identity => {
                wav::decode_wav(input)?;
                Ok(input.to_vec())
            }
            MockKind::Fir => {
                let mode = mode.ok_or(MockError::MissingMode)?;
                let kernel = RESTORER_KERNELS
                    .get(mode as usize)
                    .ok_or(MockError::BadMode(mode))?;
                let audio = wav::decode_wav(input)?;
                Ok(wav::encode_wav(&fir_filter(&audio, kernel))?)
            }
            MockKind::Flatness => {
                let audio = wav::decode_wav(input)?;
                Ok(format!("{{\"score\": {}}}\n", pseudo_mos(audio.samples())).into_bytes())
            }
            MockKind::Embedder => {
                let audio = wav::decode_wav(input)?;
                let v = spectral_embedding(audio.samples());
                Ok(format!("{}\n", serde_json::json!({ "embedding": v })).into_bytes())
            }
        }
    }
}

/// Centered convolution, same length as the input, clipped to [-1, 1].
pub fn fir_filter(audio: &AudioBuffer, kernel: &[f64]) -> AudioBuffer {
    let x = audio.samples();
    let center = (kernel.len() - 1) / 2;
    let y = (0..x.len())
        .map(|n| {
            let mut acc = 0.0f64;
            for (k, &h) in kernel.iter().enumerate() {
                if let Some(i) = (n + center).checked_sub(k) {
                    if let Some(&s) = x.get(i) {
                        acc += h * s as f64;
                    }
                }
            }
            acc.clamp(-1.0, 1.0) as f32
        })
        .collect();
    AudioBuffer::new(y, audio.sample_rate()).expect("filtered audio stays finite")
}

/// Power spectra (bins 0..=FFT_LEN/2) of Hann-windowed frames. Signals
/// shorter than one frame are zero-padded into a single frame.
fn power_frames(x: &[f32]) -> Vec<Vec<f64>> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_LEN);
    let window: Vec<f64> = (0..FFT_LEN)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / FFT_LEN as f64).cos())
        .collect();
    let starts: Vec<usize> = if x.len() <= FFT_LEN {
        vec![0]
    } else {
        (0..=(x.len() - FFT_LEN)).step_by(HOP).collect()
    };
    starts
        .into_iter()
        .map(|s| {
            let mut buf: Vec<Complex<f64>> = (0..FFT_LEN)
                .map(|n| Complex::new(x.get(s + n).map_or(0.0, |&v| v as f64) * window[n], 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..=FFT_LEN / 2].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect()
}

/// Mean over frames of geometric over arithmetic mean of the power spectrum.
pub fn spectral_flatness(x: &[f32]) -> f64 {
    let frames = power_frames(x);
    let total: f64 = frames
        .iter()
        .map(|p| {
            let n = p.len() as f64;
            let log_mean = p.iter().map(|v| (v + EPS).ln()).sum::<f64>() / n;
            let mean = p.iter().map(|v| v + EPS).sum::<f64>() / n;
            (log_mean.exp() / mean).clamp(0.0, 1.0)
        })
        .sum();
    total / frames.len() as f64
}

pub fn pseudo_mos(x: &[f32]) -> f64 {
    1.0 + 4.0 * (1.0 - spectral_flatness(x))
}

/// Mean-removed log power in bins 1..=256, scaled to unit length.
pub fn spectral_embedding(x: &[f32]) -> Vec<f64> {
    let frames = power_frames(x);
    let mut v = vec![0.0; EMBEDDING_DIM];
    for p in &frames {
        for (o, &pw) in v.iter_mut().zip(&p[1..=EMBEDDING_DIM]) {
            *o += pw;
        }
    }
    let n = frames.len() as f64;
    v.iter_mut().for_each(|o| *o = (*o / n + 1e-10).ln());
    let mean = v.iter().sum::<f64>() / EMBEDDING_DIM as f64;
    v.iter_mut().for_each(|o| *o -= mean);
    let norm = v.iter().map(|o| o * o).sum::<f64>().sqrt();
    if norm < 1e-9 {
        let mut e = vec![0.0; EMBEDDING_DIM];
        e[0] = 1.0;
        return e;
    }
    v.iter_mut().for_each(|o| *o /= norm);
    v
}
