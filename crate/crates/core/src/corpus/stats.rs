use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRow {
    pub country: String,
    pub n_samples: usize,
    pub n_speakers: usize,
    pub n_accents: usize,
    pub duration_h: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub rows: Vec<CountryRow>,
}

#[derive(Default)]
struct Acc<'a> {
    samples: usize,
    speakers: BTreeSet<&'a str>,
    accents: BTreeSet<&'a str>,
    seconds: f64,
}

/// Per-country sample, speaker, accent and duration totals.
///
/// Rows are sorted by sample count, descending, with the country code as a
/// tie-break. Accent labels are compared verbatim.
pub fn compute_stats(m: &Manifest) -> CorpusStats {
    let mut by_country: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in &m.records {
        let acc = by_country.entry(r.country.as_str()).or_default();
        acc.samples += 1;
        acc.speakers.insert(&r.speaker_id);
        acc.accents.insert(&r.accent);
        acc.seconds += r.duration_s;
    }
    let mut rows: Vec<CountryRow> = by_country
        .into_iter()
        .map(|(country, acc)| CountryRow {
            country: country.to_string(),
            n_samples: acc.samples,
            n_speakers: acc.speakers.len(),
            n_accents: acc.accents.len(),
            duration_h: acc.seconds / 3600.0,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.n_samples
            .cmp(&a.n_samples)
            .then_with(|| a.country.cmp(&b.country))
    });
    CorpusStats { rows }
}

impl CorpusStats {
    pub fn total_samples(&self) -> usize {
        self.rows.iter().map(|r| r.n_samples).sum()
    }

    pub fn total_hours(&self) -> f64 {
        self.rows.iter().map(|r| r.duration_h).sum()
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>10} {:>11} {:>10} {:>13}",
            "Country", "# samples", "# speakers", "# accents", "Duration (h)"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<8} {:>10} {:>11} {:>10} {:>13.2}",
                r.country, r.n_samples, r.n_speakers, r.n_accents, r.duration_h
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Gender, UtteranceRecord};
    use proptest::prelude::*;

    fn rec(id: &str, spk: &str, country: &str, accent: &str, dur: f64) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: id.into(),
            speaker_id: spk.into(),
            country: country.into(),
            accent: accent.into(),
            gender: Gender::Unspecified,
            age_group: String::new(),
            text: "t".into(),
            audio_path: format!("{id}.wav"),
            duration_s: dur,
            sample_rate_hz: 16000,
            replica: None,
        }
    }

    #[test]
    fn two_kenyan_records_one_speaker() {
        let m = Manifest::new(
            vec![
                rec("a", "s1", "KE", "swahili", 60.0),
                rec("b", "s1", "KE", "swahili", 120.0),
            ],
            "mem",
        )
        .unwrap();
        let stats = compute_stats(&m);
        assert_eq!(stats.rows.len(), 1);
        let row = &stats.rows[0];
        assert_eq!((row.country.as_str(), row.n_samples, row.n_speakers, row.n_accents), ("KE", 2, 1, 1));
        assert!((row.duration_h - 0.05).abs() < 1e-12);
    }

    #[test]
    fn empty_manifest_gives_empty_stats() {
        assert!(compute_stats(&Manifest::empty("mem")).rows.is_empty());
    }

    #[test]
    fn accents_compared_case_sensitively() {
        let m = Manifest::new(
            vec![rec("a", "s1", "NG", "Yoruba", 1.0), rec("b", "s2", "NG", "yoruba", 1.0)],
            "mem",
        )
        .unwrap();
        assert_eq!(compute_stats(&m).rows[0].n_accents, 2);
    }

    #[test]
    fn table_layout_matches_header() {
        let m = Manifest::new(vec![rec("a", "s1", "NG", "hausa", 3600.0)], "mem").unwrap();
        let text = compute_stats(&m).to_string();
        assert!(text.starts_with("Country"));
        assert!(text.contains("NG"));
        assert!(text.contains("1.00"));
    }

    fn arb_records() -> impl Strategy<Value = Vec<UtteranceRecord>> {
        prop::collection::vec(
            (0usize..4, 0usize..5, 0usize..3, 0.1f64..60.0),
            0..40,
        )
        .prop_map(|rows| {
            let countries = ["NG", "KE", "ZA", "GH"];
            rows.into_iter()
                .enumerate()
                .map(|(i, (c, s, a, d))| {
                    rec(&format!("u{i}"), &format!("s{s}"), countries[c], &format!("acc{a}"), d)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn totals_match_manifest(records in arb_records()) {
            let m = Manifest::new(records, "mem").unwrap();
            let stats = compute_stats(&m);
            prop_assert_eq!(stats.total_samples(), m.len());
            let expected = m.total_duration_s() / 3600.0;
            prop_assert!((stats.total_hours() - expected).abs() <= 1e-6 * expected.max(1e-12));
            for pair in stats.rows.windows(2) {
                prop_assert!(pair[0].n_samples >= pair[1].n_samples);
            }
        }

        #[test]
        fn permutation_invariant(records in arb_records(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = compute_stats(&Manifest::new(records, "mem").unwrap());
            let b = compute_stats(&Manifest::new(shuffled, "mem").unwrap());
            prop_assert_eq!(a.rows.len(), b.rows.len());
            for (x, y) in a.rows.iter().zip(&b.rows) {
                prop_assert_eq!(&x.country, &y.country);
                prop_assert_eq!(x.n_samples, y.n_samples);
                prop_assert_eq!(x.n_speakers, y.n_speakers);
                prop_assert_eq!(x.n_accents, y.n_accents);
                prop_assert!((x.duration_h - y.duration_h).abs() <= 1e-9);
            }
        }
    }
}
