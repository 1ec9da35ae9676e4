//! Frame-level voice activity detection and long-pause trimming.
//!
//! Frames are classified by RMS energy with a zero-crossing veto for quiet,
//! noise-like frames. Aggressiveness 0..=3 raises the energy floor and
//! tightens the veto, so higher settings call more frames silent.

use serde::{Deserialize, Serialize};

use super::{AudioBuffer, DspError};

pub const SUPPORTED_RATES: [u32; 4] = [8000, 16000, 32000, 48000];

pub fn vad_supports_rate(hz: u32) -> bool {
    SUPPORTED_RATES.contains(&hz)
}

/// (energy floor in dBFS, zero-crossing rate above which a quiet frame is noise)
const PRESETS: [(f64, f64); 4] = [(-60.0, 0.60), (-52.0, 0.55), (-45.0, 0.50), (-38.0, 0.45)];

/// Frames within this many dB above the floor are subject to the ZCR veto.
const ZCR_VETO_MARGIN_DB: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    pub frame_ms: u32,
    pub aggressiveness: u8,
    pub max_pause_ms: u32,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            frame_ms: 30,
            aggressiveness: 2,
            max_pause_ms: 500,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if ![10, 20, 30].contains(&self.frame_ms) {
            return Err(DspError::InvalidVadConfig(format!(
                "frame_ms must be 10, 20 or 30, got {}",
                self.frame_ms
            )));
        }
        if self.aggressiveness > 3 {
            return Err(DspError::InvalidVadConfig(format!(
                "aggressiveness must be 0..=3, got {}",
                self.aggressiveness
            )));
        }
        Ok(())
    }
}

fn frame_len(a: &AudioBuffer, cfg: &VadConfig) -> Result<usize, DspError> {
    cfg.validate()?;
    if !vad_supports_rate(a.sample_rate()) {
        return Err(DspError::UnsupportedRate(a.sample_rate()));
    }
    Ok((a.sample_rate() * cfg.frame_ms / 1000) as usize)
}

fn is_voiced(frame: &[f32], floor_db: f64, zcr_limit: f64) -> bool {
    let energy: f64 = frame.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / frame.len() as f64;
    if energy == 0.0 {
        return false;
    }
    let db = 10.0 * energy.log10();
    if db < floor_db {
        return false;
    }
    let crossings = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    let zcr = crossings as f64 / (frame.len().max(2) - 1) as f64;
    !(zcr > zcr_limit && db < floor_db + ZCR_VETO_MARGIN_DB)
}

/// Voiced/silent decision per frame. The final frame may be shorter.
pub fn classify_frames(a: &AudioBuffer, cfg: &VadConfig) -> Result<Vec<bool>, DspError> {
    let len = frame_len(a, cfg)?;
    let (floor, zcr) = PRESETS[cfg.aggressiveness as usize];
    Ok(a.samples()
        .chunks(len)
        .map(|f| is_voiced(f, floor, zcr))
        .collect())
}

/// Shortens every silent run longer than `max_pause_ms` to exactly that
/// length, keeping its first and last halves. Voiced frames pass through
/// untouched.
pub fn trim_pauses(a: &AudioBuffer, cfg: &VadConfig) -> Result<AudioBuffer, DspError> {
    let len = frame_len(a, cfg)?;
    let voiced = classify_frames(a, cfg)?;
    let keep = (cfg.max_pause_ms as u64 * a.sample_rate() as u64 / 1000) as usize;
    let samples = a.samples();
    let mut out = Vec::with_capacity(samples.len());

    let mut i = 0;
    while i < voiced.len() {
        let start = i * len;
        if voiced[i] {
            out.extend_from_slice(&samples[start..(start + len).min(samples.len())]);
            i += 1;
            continue;
        }
        let mut j = i;
        while j < voiced.len() && !voiced[j] {
            j += 1;
        }
        let run = &samples[start..(j * len).min(samples.len())];
        if run.len() > keep {
            let head = keep / 2;
            let tail = keep - head;
            out.extend_from_slice(&run[..head]);
            out.extend_from_slice(&run[run.len() - tail..]);
        } else {
            out.extend_from_slice(run);
        }
        i = j;
    }
    AudioBuffer::new(out, a.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, sr: u32) -> Vec<f32> {
        (0..n)
            .map(|i| 0.5 * (2.0 * std::f32::consts::PI * 220.0 * i as f32 / sr as f32).sin())
            .collect()
    }

    /// Independent oracle: per-frame mean-square energy against the preset floor,
    /// then run-length arithmetic on the silent runs.
    fn expected_len(samples: &[f32], frame: usize, floor_db: f64, keep: usize) -> usize {
        let silent: Vec<bool> = samples
            .chunks(frame)
            .map(|c| {
                let ms = c.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / c.len() as f64;
                ms == 0.0 || 10.0 * ms.log10() < floor_db
            })
            .collect();
        let mut total = 0;
        let mut k = 0;
        while k < silent.len() {
            let chunk = frame.min(samples.len() - k * frame);
            if !silent[k] {
                total += chunk;
                k += 1;
                continue;
            }
            let mut run = 0;
            while k < silent.len() && silent[k] {
                run += frame.min(samples.len() - k * frame);
                k += 1;
            }
            total += run.min(keep);
        }
        total
    }

    #[test]
    fn long_pause_between_tones_is_shortened() {
        let sr = 16000;
        let mut s = tone(sr as usize, sr);
        s.extend(vec![0.0; 3 * sr as usize]);
        s.extend(tone(sr as usize, sr));
        let a = AudioBuffer::new(s.clone(), sr).unwrap();
        let cfg = VadConfig::default();
        let out = trim_pauses(&a, &cfg).unwrap();
        let oracle = expected_len(&s, 480, -45.0, 8000);
        assert_eq!(out.len(), oracle);
        assert!((out.duration_s() - 2.5).abs() < 0.05, "{}", out.duration_s());
        // Voiced material at both ends survives verbatim.
        assert_eq!(&out.samples()[..16000], &s[..16000]);
        assert_eq!(&out.samples()[out.len() - 16000..], &s[s.len() - 16000..]);
    }

    #[test]
    fn nothing_silent_means_identity() {
        let a = AudioBuffer::new(tone(48000, 48000), 48000).unwrap();
        assert_eq!(trim_pauses(&a, &VadConfig::default()).unwrap(), a);
    }

    #[test]
    fn all_silence_collapses_to_one_pause() {
        let a = AudioBuffer::new(vec![0.0; 16000 * 4], 16000).unwrap();
        let cfg = VadConfig {
            max_pause_ms: 500,
            ..VadConfig::default()
        };
        assert_eq!(trim_pauses(&a, &cfg).unwrap().len(), 8000);
    }

    #[test]
    fn short_pause_kept_whole() {
        let sr = 8000;
        let mut s = tone(8000, sr);
        s.extend(vec![0.0; 2400]);
        s.extend(tone(8000, sr));
        let a = AudioBuffer::new(s, sr).unwrap();
        assert_eq!(trim_pauses(&a, &VadConfig::default()).unwrap(), a);
    }

    #[test]
    fn rejects_unsupported_rate_and_bad_config() {
        let a = AudioBuffer::new(vec![0.1; 4410], 44100).unwrap();
        assert_eq!(
            trim_pauses(&a, &VadConfig::default()).unwrap_err(),
            DspError::UnsupportedRate(44100)
        );
        let b = AudioBuffer::new(vec![0.1; 1600], 16000).unwrap();
        let cfg = VadConfig {
            frame_ms: 25,
            ..VadConfig::default()
        };
        assert!(matches!(trim_pauses(&b, &cfg), Err(DspError::InvalidVadConfig(_))));
        let cfg = VadConfig {
            aggressiveness: 4,
            ..VadConfig::default()
        };
        assert!(matches!(trim_pauses(&b, &cfg), Err(DspError::InvalidVadConfig(_))));
    }

    #[test]
    fn quiet_noise_vetoed_by_zero_crossings() {
        // Alternating-sign signal at about -40 dBFS: above the aggressiveness-2
        // floor, but its crossing rate marks it as noise.
        let s: Vec<f32> = (0..480).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let a = AudioBuffer::new(s, 16000).unwrap();
        assert_eq!(classify_frames(&a, &VadConfig::default()).unwrap(), vec![false]);
        let lenient = VadConfig {
            aggressiveness: 0,
            ..VadConfig::default()
        };
        // At aggressiveness 0 the floor is -60 dBFS and the veto band ends at -48.
        assert_eq!(classify_frames(&a, &lenient).unwrap(), vec![true]);
    }

    #[test]
    fn voiced_subsequence_preserved() {
        let sr = 16000;
        let mut s = Vec::new();
        for k in 0..5 {
            s.extend(tone(4800 + k * 480, sr));
            s.extend(vec![0.0; 480 * (10 + 7 * k)]);
        }
        let a = AudioBuffer::new(s, sr).unwrap();
        let cfg = VadConfig {
            max_pause_ms: 90,
            ..VadConfig::default()
        };
        let voiced_in: Vec<f32> = a
            .samples()
            .chunks(480)
            .zip(classify_frames(&a, &cfg).unwrap())
            .filter(|(_, v)| *v)
            .flat_map(|(c, _)| c.to_vec())
            .collect();
        let out = trim_pauses(&a, &cfg).unwrap();
        let voiced_out: Vec<f32> = out.samples().iter().copied().filter(|&x| x != 0.0).collect();
        let voiced_in_nz: Vec<f32> = voiced_in.into_iter().filter(|&x| x != 0.0).collect();
        assert_eq!(voiced_out, voiced_in_nz);
        assert!(out.len() <= a.len());
    }
}
