use rayon::prelude::*;
use serde::Serialize;

use super::Manifest;
use crate::dsp::wav;

/// Relative tolerance between metadata and decoded duration.
const DURATION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum AudioIssue {
    MissingFile,
    Undecodable { message: String },
    SampleRateMismatch { header_hz: u32, metadata_hz: u32 },
    DurationMismatch { metadata_s: f64, decoded_s: f64 },
}

impl std::fmt::Display for AudioIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AudioIssue::MissingFile => write!(f, "missing file"),
            AudioIssue::Undecodable { message } => write!(f, "undecodable header: {message}"),
            AudioIssue::SampleRateMismatch {
                header_hz,
                metadata_hz,
            } => write!(f, "sample rate mismatch: header {header_hz} Hz, metadata {metadata_hz} Hz"),
            AudioIssue::DurationMismatch {
                metadata_s,
                decoded_s,
            } => write!(f, "duration mismatch: metadata {metadata_s:.3} s, decoded {decoded_s:.3} s"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AudioCheck {
    pub utterance_id: String,
    pub issues: Vec<AudioIssue>,
}

impl AudioCheck {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AudioCheck>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &AudioCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(AudioCheck::passed)
    }
}

/// Checks every record's audio file. Problems become report entries.
pub fn validate_audio(m: &Manifest) -> ValidationReport {
    let checks = m
        .records
        .par_iter()
        .map(|r| {
            let path = m.resolve_audio(r);
            let mut issues = Vec::new();
            if !path.is_file() {
                issues.push(AudioIssue::MissingFile);
            } else {
                match wav::probe(&path) {
                    Err(e) => issues.push(AudioIssue::Undecodable {
                        message: e.to_string(),
                    }),
                    Ok(info) => {
                        if info.sample_rate != r.sample_rate_hz {
                            issues.push(AudioIssue::SampleRateMismatch {
                                header_hz: info.sample_rate,
                                metadata_hz: r.sample_rate_hz,
                            });
                        }
                        let decoded = info.duration_s();
                        if (decoded - r.duration_s).abs() > DURATION_TOLERANCE * r.duration_s {
                            issues.push(AudioIssue::DurationMismatch {
                                metadata_s: r.duration_s,
                                decoded_s: decoded,
                            });
                        }
                    }
                }
            }
            AudioCheck {
                utterance_id: r.utterance_id.clone(),
                issues,
            }
        })
        .collect();
    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Gender, UtteranceRecord};
    use crate::dsp::AudioBuffer;

    fn rec(id: &str, dur: f64, sr: u32) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: id.into(),
            speaker_id: "s".into(),
            country: "NG".into(),
            accent: "igbo".into(),
            gender: Gender::Male,
            age_group: String::new(),
            text: "t".into(),
            audio_path: format!("{id}.wav"),
            duration_s: dur,
            sample_rate_hz: sr,
            replica: None,
        }
    }

    fn write_silence(dir: &std::path::Path, name: &str, seconds: f64, sr: u32) {
        let n = (seconds * sr as f64).round() as usize;
        let buf = AudioBuffer::new(vec![0.0; n], sr).unwrap();
        wav::write_wav(&dir.join(name), &buf).unwrap();
    }

    #[test]
    fn reports_missing_match_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_silence(dir.path(), "ok.wav", 1.0, 48000);
        write_silence(dir.path(), "long.wav", 12.0, 8000);
        std::fs::write(dir.path().join("junk.wav"), b"not a wav").unwrap();
        let m = Manifest::new(
            vec![
                rec("missing", 1.0, 48000),
                rec("ok", 1.0, 48000),
                rec("long", 10.0, 8000),
                rec("junk", 1.0, 48000),
                rec("ok2", 1.0, 16000),
            ],
            "mem",
        )
        .unwrap()
        .with_base_dir(dir.path());
        std::fs::copy(dir.path().join("ok.wav"), dir.path().join("ok2.wav")).unwrap();

        let report = validate_audio(&m);
        assert_eq!(report.checks[0].issues, vec![AudioIssue::MissingFile]);
        assert!(report.checks[1].passed());
        // Decode-length oracle: 12 s of 8 kHz samples is 96000 frames.
        match &report.checks[2].issues[..] {
            [AudioIssue::DurationMismatch { metadata_s, decoded_s }] => {
                assert_eq!(*metadata_s, 10.0);
                assert!((decoded_s - 96000.0 / 8000.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(report.checks[3].issues[..], [AudioIssue::Undecodable { .. }]));
        assert!(matches!(
            report.checks[4].issues[0],
            AudioIssue::SampleRateMismatch { header_hz: 48000, metadata_hz: 16000 }
        ));
        assert_eq!(report.failures().count(), 4);
        assert_eq!(report.checks[0].issues[0].to_string(), "missing file");
    }
}
