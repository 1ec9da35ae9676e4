//! Enhancement chain: denoise, restore in three modes, score every
//! candidate with a quality estimator and keep the best one.
//!
//! All outputs are new files named `<utterance>.<label>.wav` inside the
//! output directory; source audio is only read.

mod adapter;
pub mod mock;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapter::{
    call_audio, call_embedding, call_score, call_transcript, Adapter, AdapterError, HttpAdapter,
    MockAdapter, SubprocessAdapter, MODE_ENV,
};
pub use mock::MockKind;

use crate::corpus::{Manifest, UtteranceRecord};

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed registry: {0}")]
    Registry(String),
    #[error("registry has no {0} adapter")]
    MissingAdapter(AdapterKind),
    #[error("denoiser failed for '{id}': {source}")]
    Denoiser {
        id: String,
        #[source]
        source: AdapterError,
    },
    #[error("no scored candidate for '{0}'")]
    NoScoredCandidate(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EnhanceError + '_ {
    move |source| EnhanceError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Denoiser,
    Restorer,
    QualityEstimator,
    Asr,
    Embedder,
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdapterKind::Denoiser => "denoiser",
            AdapterKind::Restorer => "restorer",
            AdapterKind::QualityEstimator => "quality_estimator",
            AdapterKind::Asr => "asr",
            AdapterKind::Embedder => "embedder",
        })
    }
}

/// One registry entry. `endpoint` is `mock:<kind>`, an `http(s)://` URL, or
/// a shell-quoted command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub name: String,
    pub kind: AdapterKind,
    pub endpoint: String,
    pub timeout_s: f64,
}

impl AdapterSpec {
    fn build(&self) -> Result<Box<dyn Adapter>, EnhanceError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(EnhanceError::Registry(format!(
                "adapter '{}': timeout_s must be positive",
                self.name
            )));
        }
        let timeout = Duration::from_secs_f64(self.timeout_s);
        let ep = self.endpoint.trim();
        if let Some(kind) = ep.strip_prefix("mock:") {
            let kind = MockKind::from_str(kind).map_err(|e| EnhanceError::Registry(e.to_string()))?;
            return Ok(Box::new(MockAdapter::new(&self.name, kind)));
        }
        if ep.starts_with("http://") || ep.starts_with("https://") {
            return Ok(Box::new(HttpAdapter::new(&self.name, ep, timeout)));
        }
        match shlex::split(ep) {
            Some(argv) if !argv.is_empty() => Ok(Box::new(SubprocessAdapter::new(&self.name, argv, timeout))),
            _ => Err(EnhanceError::Registry(format!(
                "adapter '{}': cannot parse endpoint '{}'",
                self.name, self.endpoint
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegistryFile {
    pub adapters: Vec<AdapterSpec>,
}

/// Immutable set of adapters built from a registry file.
pub struct Registry {
    specs: Vec<AdapterSpec>,
    adapters: Vec<Box<dyn Adapter>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("specs", &self.specs).finish()
    }
}

impl Registry {
    pub fn from_specs(specs: Vec<AdapterSpec>) -> Result<Self, EnhanceError> {
        let mut names = BTreeSet::new();
        for s in &specs {
            if !names.insert(s.name.as_str()) {
                return Err(EnhanceError::Registry(format!("duplicate adapter name '{}'", s.name)));
            }
        }
        let adapters = specs.iter().map(AdapterSpec::build).collect::<Result<_, _>>()?;
        Ok(Registry { specs, adapters })
    }

    pub fn from_json_str(text: &str) -> Result<Self, EnhanceError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| EnhanceError::Registry(e.to_string()))?;
        Self::from_specs(file.adapters)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, EnhanceError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json_str(&text)
    }

    /// Registry of in-process mocks covering every adapter kind but ASR.
    pub fn mock() -> Self {
        let spec = |name: &str, kind, endpoint: &str| AdapterSpec {
            name: name.into(),
            kind,
            endpoint: endpoint.into(),
            timeout_s: 30.0,
        };
        Self::from_specs(vec![
            spec("denoiser", AdapterKind::Denoiser, "mock:identity"),
            spec("restorer", AdapterKind::Restorer, "mock:fir"),
            spec("estimator", AdapterKind::QualityEstimator, "mock:flatness"),
            spec("embedder", AdapterKind::Embedder, "mock:embedder"),
        ])
        .expect("mock registry is valid")
    }

    pub fn specs(&self) -> &[AdapterSpec] {
        &self.specs
    }

    /// First adapter of the given kind.
    pub fn get(&self, kind: AdapterKind) -> Result<&dyn Adapter, EnhanceError> {
        self.specs
            .iter()
            .position(|s| s.kind == kind)
            .map(|i| self.adapters[i].as_ref())
            .ok_or(EnhanceError::MissingAdapter(kind))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateLabel {
    Denoised,
    Mode0,
    Mode1,
    Mode2,
}

impl CandidateLabel {
    pub const ALL: [CandidateLabel; 4] = [
        CandidateLabel::Denoised,
        CandidateLabel::Mode0,
        CandidateLabel::Mode1,
        CandidateLabel::Mode2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateLabel::Denoised => "denoised",
            CandidateLabel::Mode0 => "mode0",
            CandidateLabel::Mode1 => "mode1",
            CandidateLabel::Mode2 => "mode2",
        }
    }
}

impl fmt::Display for CandidateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A candidate slot. `audio` is a file name relative to the output
/// directory, absent when the producing adapter failed; `note` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: CandidateLabel,
    pub audio: Option<String>,
    pub predicted_mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Always four slots in the order denoised, mode0, mode1, mode2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub utterance_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn present(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.audio.is_some())
    }
}

/// File-name-safe version of an utterance id.
pub fn file_stem(utterance_id: &str) -> String {
    utterance_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn candidate_file_name(utterance_id: &str, label: CandidateLabel) -> String {
    format!("{}.{}.wav", file_stem(utterance_id), label)
}

/// Denoises `source`, then runs the restorer in modes 0 to 2 on the
/// denoised audio. A failing mode leaves an absent slot with a note.
pub fn produce_candidates(
    utterance_id: &str,
    source: &Path,
    registry: &Registry,
    out_dir: &Path,
) -> Result<CandidateSet, EnhanceError> {
    let denoiser = registry.get(AdapterKind::Denoiser)?;
    let restorer = registry.get(AdapterKind::Restorer)?;
    let input = std::fs::read(source).map_err(io_err(source))?;
    let (denoised, _) = call_audio(denoiser, &input, None).map_err(|source| EnhanceError::Denoiser {
        id: utterance_id.to_string(),
        source,
    })?;
    let save = |label: CandidateLabel, bytes: &[u8]| -> Result<String, EnhanceError> {
        let name = candidate_file_name(utterance_id, label);
        let path = out_dir.join(&name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        Ok(name)
    };
    let mut candidates = vec![Candidate {
        label: CandidateLabel::Denoised,
        audio: Some(save(CandidateLabel::Denoised, &denoised)?),
        predicted_mos: None,
        note: None,
    }];
    for (mode, label) in CandidateLabel::ALL[1..].iter().enumerate() {
        let slot = match call_audio(restorer, &denoised, Some(mode as u8)) {
            Ok((bytes, _)) => Candidate {
                label: *label,
                audio: Some(save(*label, &bytes)?),
                predicted_mos: None,
                note: None,
            },
            Err(e) => {
                warn!("{utterance_id}: {label} absent: {e}");
                Candidate {
                    label: *label,
                    audio: None,
                    predicted_mos: None,
                    note: Some(e.to_string()),
                }
            }
        };
        candidates.push(slot);
    }
    Ok(CandidateSet {
        utterance_id: utterance_id.to_string(),
        candidates,
    })
}

/// Scores every present candidate; an estimator failure leaves that score
/// absent.
pub fn score_candidates(
    mut set: CandidateSet,
    estimator: &dyn Adapter,
    out_dir: &Path,
) -> Result<CandidateSet, EnhanceError> {
    for c in set.candidates.iter_mut() {
        let Some(name) = &c.audio else { continue };
        let path = out_dir.join(name);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        match call_score(estimator, &bytes) {
            Ok(s) => c.predicted_mos = Some(s),
            Err(e) => {
                warn!("{}: {} unscored: {e}", set.utterance_id, c.label);
                c.predicted_mos = None;
                c.note = Some(e.to_string());
            }
        }
    }
    Ok(set)
}

/// Highest predicted MOS; ties go to the earlier slot.
pub fn select_best(set: &CandidateSet) -> Result<&Candidate, EnhanceError> {
    let mut best: Option<(&Candidate, f64)> = None;
    for c in &set.candidates {
        if let (Some(_), Some(s)) = (&c.audio, c.predicted_mos) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| EnhanceError::NoScoredCandidate(set.utterance_id.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceFailure {
    pub utterance_id: String,
    pub message: String,
}

#[derive(Debug)]
pub struct EnhanceOutcome {
    /// Records whose audio now points at the selected candidate.
    pub manifest: Manifest,
    pub sets: Vec<CandidateSet>,
    pub selected: Vec<(String, CandidateLabel)>,
    pub failures: Vec<EnhanceFailure>,
}

fn enhance_one(
    m: &Manifest,
    r: &UtteranceRecord,
    registry: &Registry,
    out_dir: &Path,
) -> Result<(UtteranceRecord, CandidateSet, CandidateLabel), EnhanceError> {
    let set = produce_candidates(&r.utterance_id, &m.resolve_audio(r), registry, out_dir)?;
    let set = score_candidates(set, registry.get(AdapterKind::QualityEstimator)?, out_dir)?;
    let best = select_best(&set)?;
    let name = best.audio.clone().expect("selected candidate has audio");
    let path = out_dir.join(&name);
    let info = crate::dsp::wav::probe(&path).map_err(|e| EnhanceError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let label = best.label;
    let record = UtteranceRecord {
        audio_path: name,
        sample_rate_hz: info.sample_rate,
        duration_s: info.duration_s(),
        ..r.clone()
    };
    Ok((record, set, label))
}

/// Runs the whole chain for every record on a pool of `workers` threads.
/// Failed utterances are logged, reported and dropped from the output.
pub fn enhance_manifest(
    m: &Manifest,
    registry: &Registry,
    out_dir: &Path,
    workers: usize,
) -> Result<EnhanceOutcome, EnhanceError> {
    for kind in [AdapterKind::Denoiser, AdapterKind::Restorer, AdapterKind::QualityEstimator] {
        registry.get(kind)?;
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<_> = pool.install(|| {
        m.records
            .par_iter()
            .map(|r| enhance_one(m, r, registry, out_dir))
            .collect()
    });
    let mut records = Vec::new();
    let mut sets = Vec::new();
    let mut selected = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in m.records.iter().zip(results) {
        match res {
            Ok((rec, set, label)) => {
                selected.push((rec.utterance_id.clone(), label));
                records.push(rec);
                sets.push(set);
            }
            Err(e) => {
                warn!("{}: skipped: {e}", r.utterance_id);
                failures.push(EnhanceFailure {
                    utterance_id: r.utterance_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    let manifest = m.derive(records).with_base_dir(out_dir);
    Ok(EnhanceOutcome {
        manifest,
        sets,
        selected,
        failures,
    })
}

/// Absolute location of a candidate's audio.
pub fn candidate_path(out_dir: &Path, c: &Candidate) -> Option<PathBuf> {
    c.audio.as_ref().map(|a| out_dir.join(a))
}
