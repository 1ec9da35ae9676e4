//! Seeded synthetic corpora: harmonic "voiced" segments with pauses and a
//! little noise, one timbre per speaker.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_manifest, Gender, Manifest, ManifestError, UtteranceRecord};
use crate::dsp::{wav, AudioBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpeaker {
    pub speaker_id: String,
    pub country: String,
    pub accent: String,
    pub gender: Gender,
    pub utterances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub speakers: Vec<SynthSpeaker>,
    pub sample_rate_hz: u32,
    /// Voiced length range per utterance, in seconds.
    pub min_voiced_s: f64,
    pub max_voiced_s: f64,
    pub seed: u64,
}

const WORDS: &[&str] = &[
    "the", "market", "in", "Lagos", "opens", "at", "7", "am", "and", "Dr.", "Okafor", "said", "Alh.", "Musa",
    "paid", "N500", "for", "12", "yams", "Maj.", "Mensah", "travelled", "to", "Accra", "on", "Monday",
];

impl SynthSpec {
    /// `n_speakers` speakers split evenly across a few country/accent pairs,
    /// `per_speaker` utterances each.
    pub fn uniform(n_speakers: usize, per_speaker: usize, seed: u64) -> Self {
        const GROUPS: [(&str, &str); 4] = [("NG", "yoruba"), ("GH", "twi"), ("KE", "swahili"), ("ZA", "zulu")];
        let speakers = (0..n_speakers)
            .map(|i| {
                let (country, accent) = GROUPS[i % GROUPS.len()];
                SynthSpeaker {
                    speaker_id: format!("spk{i:03}"),
                    country: country.into(),
                    accent: accent.into(),
                    gender: if i % 2 == 0 { Gender::Female } else { Gender::Male },
                    utterances: per_speaker,
                }
            })
            .collect();
        SynthSpec {
            speakers,
            sample_rate_hz: 16000,
            min_voiced_s: 0.6,
            max_voiced_s: 1.6,
            seed,
        }
    }
}

/// One utterance: silence, voiced harmonics with a short internal pause,
/// silence. `f0` sets the timbre.
pub fn synth_utterance(rng: &mut impl Rng, f0: f64, voiced_s: f64, sample_rate: u32) -> AudioBuffer {
    let sr = sample_rate as f64;
    let secs = |s: f64| (s * sr).round() as usize;
    let lead = secs(rng.random_range(0.2..0.6));
    let gap = secs(rng.random_range(0.6..1.2));
    let tail = secs(rng.random_range(0.2..0.6));
    let half = secs(voiced_s / 2.0);
    let amp = rng.random_range(0.05..0.4);
    let mut out = Vec::with_capacity(lead + gap + tail + 2 * half);
    let mut noise = |out: &mut Vec<f32>, n: usize| {
        for _ in 0..n {
            out.push(rng.random_range(-1e-4f32..1e-4));
        }
    };
    noise(&mut out, lead);
    let voiced = |out: &mut Vec<f32>, n: usize| {
        for i in 0..n {
            let t = i as f64 / sr;
            let v: f64 = (1..=4)
                .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64)
                .sum();
            out.push((amp * v / 2.1) as f32);
        }
    };
    voiced(&mut out, half);
    noise(&mut out, gap);
    voiced(&mut out, half);
    noise(&mut out, tail);
    AudioBuffer::new(out, sample_rate).expect("synthetic audio is finite")
}

fn sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(4..12);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes WAVs and `manifest.jsonl` into `dir`. Same spec, same bytes.
pub fn write_synth_corpus(dir: &Path, spec: &SynthSpec) -> Result<Manifest, ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir.join("wavs")).map_err(io_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    for (si, spk) in spec.speakers.iter().enumerate() {
        let f0 = 100.0 + 17.0 * (si % 11) as f64;
        for u in 0..spk.utterances {
            let id = format!("{}_{u:04}", spk.speaker_id);
            let voiced = rng.random_range(spec.min_voiced_s..=spec.max_voiced_s);
            let audio = synth_utterance(&mut rng, f0, voiced, spec.sample_rate_hz);
            let rel = format!("wavs/{id}.wav");
            wav::write_wav(&dir.join(&rel), &audio)
                .map_err(|e| io_err(std::io::Error::other(e.to_string())))?;
            records.push(UtteranceRecord {
                utterance_id: id,
                speaker_id: spk.speaker_id.clone(),
                country: spk.country.clone(),
                accent: spk.accent.clone(),
                gender: spk.gender,
                age_group: String::new(),
                text: sentence(&mut rng),
                audio_path: rel,
                duration_s: audio.duration_s(),
                sample_rate_hz: spec.sample_rate_hz,
                replica: None,
            });
        }
    }
    let path = dir.join("manifest.jsonl");
    let m = Manifest::new(records, path.display().to_string())?.with_base_dir(dir);
    write_manifest(&path, &m)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SynthSpec::uniform(3, 2, 9);
        let ma = write_synth_corpus(a.path(), &spec).unwrap();
        write_synth_corpus(b.path(), &spec).unwrap();
        assert_eq!(ma.len(), 6);
        for r in &ma.records {
            assert_eq!(
                std::fs::read(a.path().join(&r.audio_path)).unwrap(),
                std::fs::read(b.path().join(&r.audio_path)).unwrap()
            );
        }
        assert_eq!(
            std::fs::read(a.path().join("manifest.jsonl")).unwrap(),
            std::fs::read(b.path().join("manifest.jsonl")).unwrap()
        );
    }
}
