use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceRecord;

pub const MAX_DURATION_S: f64 = 50.0;
pub const MAX_TEXT_CHARS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    Eligible,
    TooLongAudio,
    TooLongText,
}

/// Duration is checked first; text length counts Unicode scalar values of the
/// raw transcript. Both bounds are inclusive.
pub fn check_eligibility(r: &UtteranceRecord) -> Eligibility {
    if r.duration_s > MAX_DURATION_S {
        Eligibility::TooLongAudio
    } else if r.text.chars().count() > MAX_TEXT_CHARS {
        Eligibility::TooLongText
    } else {
        Eligibility::Eligible
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Gender;

    fn rec(duration_s: f64, chars: usize) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: "u".into(),
            speaker_id: "s".into(),
            country: "NG".into(),
            accent: "hausa".into(),
            gender: Gender::Female,
            age_group: String::new(),
            text: "a".repeat(chars),
            audio_path: "u.wav".into(),
            duration_s,
            sample_rate_hz: 16000,
            replica: None,
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(check_eligibility(&rec(55.0, 10)), Eligibility::TooLongAudio);
        assert_eq!(check_eligibility(&rec(10.0, 450)), Eligibility::TooLongText);
        assert_eq!(check_eligibility(&rec(10.0, 100)), Eligibility::Eligible);
        assert_eq!(check_eligibility(&rec(60.0, 500)), Eligibility::TooLongAudio);
    }

    #[test]
    fn counts_scalar_values_not_bytes() {
        let mut r = rec(1.0, 0);
        r.text = "é".repeat(400);
        assert_eq!(r.text.len(), 800);
        assert_eq!(check_eligibility(&r), Eligibility::Eligible);
    }
}
