//! Corpus data model: utterance records, manifests and per-country statistics.
//!
//! Manifests are stored as JSON Lines, one [`UtteranceRecord`] per line. CSV
//! with a header row is accepted on import. Relative `audio_path`s resolve
//! against the directory holding the manifest file.

mod country;
mod manifest;
mod stats;
pub mod synth;
mod validate;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use country::is_known_country;
pub use manifest::{load_manifest, write_manifest, ManifestError, ManifestFormat};
pub use stats::{compute_stats, CorpusStats, CountryRow};
pub use validate::{validate_audio, AudioCheck, AudioIssue, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unspecified,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unspecified => "unspecified",
        }
    }

    /// Anything other than female/male (case-insensitive) maps to `Unspecified`.
    pub fn parse_lenient(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" => Gender::Female,
            "male" => Gender::Male,
            _ => Gender::Unspecified,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Gender {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Gender {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        Ok(raw.map(|s| Gender::parse_lenient(&s)).unwrap_or_default())
    }
}

/// Lineage of a record produced by duplication during speaker balancing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replica {
    pub source_id: String,
    pub index: u32,
}

/// One recording with its transcript and speaker metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub country: String,
    pub accent: String,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default)]
    pub age_group: String,
    pub text: String,
    pub audio_path: String,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<Replica>,
}

/// An ordered, validated collection of utterance records.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<UtteranceRecord>,
    pub source_uri: String,
    base_dir: Option<PathBuf>,
}

impl Manifest {
    /// Builds a manifest, running the same checks as [`load_manifest`].
    /// Row numbers in errors are 1-based positions in `records`.
    pub fn new(
        records: Vec<UtteranceRecord>,
        source_uri: impl Into<String>,
    ) -> Result<Self, ManifestError> {
        let rows: Vec<(usize, UtteranceRecord)> = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect();
        manifest::validate_rows(rows).map(|records| Manifest {
            records,
            source_uri: source_uri.into(),
            base_dir: None,
        })
    }

    pub fn empty(source_uri: impl Into<String>) -> Self {
        Manifest {
            records: Vec::new(),
            source_uri: source_uri.into(),
            base_dir: None,
        }
    }

    /// Directory that relative audio paths are resolved against.
    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn resolve_audio(&self, record: &UtteranceRecord) -> PathBuf {
        let p = Path::new(&record.audio_path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.records.iter().map(|r| r.duration_s).sum()
    }

    /// Same source and base directory, different records. Records are not re-validated.
    pub fn derive(&self, records: Vec<UtteranceRecord>) -> Manifest {
        Manifest {
            records,
            source_uri: self.source_uri.clone(),
            base_dir: self.base_dir.clone(),
        }
    }
}
