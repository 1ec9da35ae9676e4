//! Declarative corpus pipeline: ingest, enhance, preprocess, split and
//! balance, each writing to its own directory under `out_dir`, with a run
//! manifest of content digests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    compute_stats, load_manifest, validate_audio, write_manifest, Manifest, ManifestFormat, UtteranceRecord,
};
use crate::dsp::{
    check_eligibility, resample, rms_normalize, trim_pauses, vad_supports_rate, wav, Eligibility, VadConfig,
    DEFAULT_TARGET_DBFS,
};
use crate::enhance::{self, call_embedding, file_stem, Adapter, AdapterKind, Registry, RegistryFile};
use crate::speaker::{
    generate_personas, import_embeddings, interpolate, write_embedding_records, EmbeddingRecord, EmbeddingStore,
    InterpolationPolicy, Persona, PersonaSpec, SpeakerEmbedding, SpeakerError, SpeakerMeta, DEFAULT_ALPHA,
    MAX_SOURCES,
};
use crate::split::{balance_duplicate, make_splits, BalanceConfig, SplitConfig};
use crate::textnorm::{normalize_text, NormalizationRules};

/// Overrides every adapter's `timeout_s` when set.
pub const TIMEOUT_ENV: &str = "AFROFORGE_ADAPTER_TIMEOUT_S";
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn stage_err(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Enhance,
    Preprocess,
    Split,
    Balance,
    NormalizeText,
    Embed,
    Interpolate,
}

impl Stage {
    /// Stages of a full run, in order.
    pub const PIPELINE: [Stage; 5] = [Stage::Ingest, Stage::Enhance, Stage::Preprocess, Stage::Split, Stage::Balance];
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Enhance,
        Stage::Preprocess,
        Stage::Split,
        Stage::Balance,
        Stage::NormalizeText,
        Stage::Embed,
        Stage::Interpolate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Enhance => "enhance",
            Stage::Preprocess => "preprocess",
            Stage::Split => "split",
            Stage::Balance => "balance",
            Stage::NormalizeText => "normalize_text",
            Stage::Embed => "embed",
            Stage::Interpolate => "interpolate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspSettings {
    pub target_dbfs: f64,
    pub vad: VadConfig,
    /// Output rate; also used ahead of trimming when the input rate is not
    /// one the VAD supports. `None` keeps the input rate.
    pub resample_hz: Option<u32>,
}

impl Default for DspSettings {
    fn default() -> Self {
        DspSettings {
            target_dbfs: DEFAULT_TARGET_DBFS,
            vad: VadConfig::default(),
            resample_hz: Some(16000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub test_min_group_minutes: f64,
    pub test_size: usize,
    pub dev_size: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        let d = SplitConfig::default();
        SplitSettings {
            test_min_group_minutes: d.test_min_group_minutes,
            test_size: d.test_size,
            dev_size: d.dev_size,
        }
    }
}

fn default_workers() -> usize {
    4
}

/// Pipeline configuration. Relative paths resolve against the directory of
/// the config file. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub manifest_format: Option<ManifestFormat>,
    #[serde(default)]
    pub registry: Option<PathBuf>,
    #[serde(default)]
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub dsp: DspSettings,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub balance: BalanceConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = std::path::absolute(path)
            .map_err(io_err(path))?
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    /// Makes every relative path absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.out_dir);
        if let Some(p) = self.registry.as_mut() {
            fix(p);
        }
        if let Some(p) = self.rules.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let exists = |field: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{field}: {} does not exist", p.display())))
            }
        };
        exists("manifest", &self.manifest)?;
        if let Some(p) = &self.registry {
            exists("registry", p)?;
        }
        if let Some(p) = &self.rules {
            exists("rules", p)?;
        }
        self.dsp
            .vad
            .validate()
            .map_err(|e| PipelineError::Config(format!("dsp.vad: {e}")))?;
        if !self.dsp.target_dbfs.is_finite() || self.dsp.target_dbfs >= 0.0 {
            return Err(PipelineError::Config("dsp.target_dbfs must be negative".into()));
        }
        if self.dsp.resample_hz == Some(0) {
            return Err(PipelineError::Config("dsp.resample_hz must be positive".into()));
        }
        if !(self.split.test_min_group_minutes.is_finite() && self.split.test_min_group_minutes > 0.0) {
            return Err(PipelineError::Config("split.test_min_group_minutes must be positive".into()));
        }
        let t = self.balance.target_minutes_per_speaker;
        if !(t.is_finite() && t > 0.0) {
            return Err(PipelineError::Config("balance.target_minutes_per_speaker must be positive".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding `out_dir`.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out_dir");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            test_min_group_minutes: self.split.test_min_group_minutes,
            test_size: self.split.test_size,
            dev_size: self.split.dev_size,
            seed: self.seed,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

/// Loads a registry, applying the timeout override from [`TIMEOUT_ENV`].
pub fn load_registry(path: &Path) -> Result<Registry, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut file: RegistryFile =
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("registry: {e}")))?;
    if let Ok(raw) = std::env::var(TIMEOUT_ENV) {
        let secs: f64 = raw
            .trim()
            .parse()
            .map_err(|_| PipelineError::Config(format!("{TIMEOUT_ENV}: '{raw}' is not a number")))?;
        for a in file.adapters.iter_mut() {
            a.timeout_s = secs;
        }
    }
    Registry::from_specs(file.adapters).map_err(|e| PipelineError::Config(format!("registry: {e}")))
}

pub fn load_rules(path: Option<&Path>) -> Result<NormalizationRules, PipelineError> {
    match path {
        Some(p) => NormalizationRules::from_json_file(p).map_err(|e| PipelineError::Config(format!("rules: {e}"))),
        None => Ok(NormalizationRules::default()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub utterance_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub records_in: usize,
    pub records_out: usize,
    pub failures: Vec<StageFailure>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("row serializes"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn save_manifest(stage: Stage, path: &Path, m: &Manifest) -> Result<(), PipelineError> {
    write_manifest(path, m).map_err(|e| stage_err(stage)(&e))
}

fn read_manifest(stage: Stage, path: &Path, format: ManifestFormat) -> Result<Manifest, PipelineError> {
    load_manifest(path, format).map_err(|e| stage_err(stage)(&e))
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

/// `target` relative to `base`; both must be absolute.
pub fn relative_path(target: &Path, base: &Path) -> PathBuf {
    let t: Vec<Component> = target.components().collect();
    let b: Vec<Component> = base.components().collect();
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return target.to_path_buf();
    }
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c.as_os_str());
    }
    out
}

/// Same records with audio paths rewritten relative to `new_dir`.
fn rebase(m: &Manifest, new_dir: &Path) -> Manifest {
    let records = m
        .records
        .iter()
        .map(|r| UtteranceRecord {
            audio_path: relative_path(&m.resolve_audio(r), new_dir).to_string_lossy().into_owned(),
            ..r.clone()
        })
        .collect();
    m.derive(records).with_base_dir(new_dir)
}

/// Validates audio, drops records with issues and writes statistics.
/// Output audio paths are absolute.
pub fn ingest(
    manifest: &Path,
    format: Option<ManifestFormat>,
    out: &Path,
) -> Result<(Manifest, StageOutcome), PipelineError> {
    let stage = Stage::Ingest;
    let m = load_manifest(manifest, format.unwrap_or_else(|| ManifestFormat::from_path(manifest)))
        .map_err(|e| stage_err(stage)(&e))?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let report = validate_audio(&m);
    let failures: Vec<StageFailure> = report
        .failures()
        .map(|c| StageFailure {
            utterance_id: c.utterance_id.clone(),
            message: c.issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        })
        .collect();
    let keep = m
        .records
        .iter()
        .zip(&report.checks)
        .filter(|(_, c)| c.passed())
        .map(|(r, _)| {
            let abs = std::path::absolute(m.resolve_audio(r)).unwrap_or_else(|_| m.resolve_audio(r));
            UtteranceRecord {
                audio_path: abs.to_string_lossy().into_owned(),
                ..r.clone()
            }
        })
        .collect();
    let valid = m.derive(keep).with_base_dir(out);
    save_manifest(stage, &out.join("manifest.jsonl"), &valid)?;
    write_json(&out.join("validation.json"), &report)?;
    let stats = compute_stats(&valid);
    write_json(&out.join("stats.json"), &stats)?;
    std::fs::write(out.join("stats.txt"), stats.to_string()).map_err(io_err(out))?;
    let outcome = StageOutcome {
        stage,
        records_in: m.len(),
        records_out: valid.len(),
        failures,
    };
    Ok((valid, outcome))
}

/// Denoise, restore, score and select per utterance.
pub fn enhance_stage(
    m: &Manifest,
    registry: &Registry,
    out: &Path,
    workers: usize,
) -> Result<(Manifest, StageOutcome), PipelineError> {
    let stage = Stage::Enhance;
    let o = enhance::enhance_manifest(m, registry, out, workers).map_err(|e| stage_err(stage)(&e))?;
    save_manifest(stage, &out.join("manifest.jsonl"), &o.manifest)?;
    write_jsonl(&out.join("candidates.jsonl"), &o.sets)?;
    let selected: BTreeMap<&str, &str> = o
        .selected
        .iter()
        .map(|(id, label)| (id.as_str(), label.as_str()))
        .collect();
    write_json(&out.join("selected.json"), &selected)?;
    let outcome = StageOutcome {
        stage,
        records_in: m.len(),
        records_out: o.manifest.len(),
        failures: o
            .failures
            .into_iter()
            .map(|f| StageFailure {
                utterance_id: f.utterance_id,
                message: f.message,
            })
            .collect(),
    };
    Ok((o.manifest, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessEntry {
    pub utterance_id: String,
    pub gain: f64,
    pub clipped: usize,
    pub input_s: f64,
    pub output_s: f64,
    pub sample_rate_hz: u32,
    pub eligibility: Eligibility,
}

/// Loudness normalization, pause trimming and resampling of one buffer.
///
/// If the VAD cannot run at the input rate the buffer is resampled to
/// `resample_hz` before trimming instead of after.
pub fn process_audio(
    audio: &crate::dsp::AudioBuffer,
    settings: &DspSettings,
) -> Result<(crate::dsp::AudioBuffer, f64, usize), String> {
    let n = rms_normalize(audio, settings.target_dbfs).map_err(|e| e.to_string())?;
    let mut a = n.audio;
    if !vad_supports_rate(a.sample_rate()) {
        match settings.resample_hz.filter(|&hz| vad_supports_rate(hz)) {
            Some(hz) => a = resample(&a, hz),
            None => {
                return Err(format!(
                    "VAD does not support {} Hz and no supported resample_hz is set",
                    a.sample_rate()
                ))
            }
        }
    }
    a = trim_pauses(&a, &settings.vad).map_err(|e| e.to_string())?;
    if let Some(hz) = settings.resample_hz {
        a = resample(&a, hz);
    }
    Ok((a, n.gain, n.clipped))
}

/// Processes audio, applies the eligibility filter and normalizes text.
/// Eligibility uses the processed duration and the raw transcript.
pub fn preprocess(
    m: &Manifest,
    settings: &DspSettings,
    rules: &NormalizationRules,
    out: &Path,
    workers: usize,
) -> Result<(Manifest, StageOutcome), PipelineError> {
    let stage = Stage::Preprocess;
    let audio_dir = out.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(io_err(&audio_dir))?;
    let results: Vec<Result<(UtteranceRecord, PreprocessEntry), String>> = thread_pool(workers).install(|| {
        m.records
            .par_iter()
            .map(|r| {
                let src = m.resolve_audio(r);
                let audio = wav::read_wav(&src).map_err(|e| format!("{}: {e}", src.display()))?;
                let (processed, gain, clipped) = process_audio(&audio, settings)?;
                let name = format!("audio/{}.wav", file_stem(&r.utterance_id));
                let dest = out.join(&name);
                wav::write_wav(&dest, &processed).map_err(|e| format!("{}: {e}", dest.display()))?;
                let record = UtteranceRecord {
                    audio_path: name,
                    duration_s: processed.duration_s(),
                    sample_rate_hz: processed.sample_rate(),
                    ..r.clone()
                };
                let entry = PreprocessEntry {
                    utterance_id: r.utterance_id.clone(),
                    gain,
                    clipped,
                    input_s: audio.duration_s(),
                    output_s: processed.duration_s(),
                    sample_rate_hz: processed.sample_rate(),
                    eligibility: check_eligibility(&record),
                };
                Ok((record, entry))
            })
            .collect()
    });
    let mut kept = Vec::new();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in m.records.iter().zip(results) {
        match res {
            Ok((mut record, entry)) => {
                if entry.eligibility == Eligibility::Eligible {
                    record.text = normalize_text(&record.text, rules);
                    kept.push(record);
                }
                entries.push(entry);
            }
            Err(message) => failures.push(StageFailure {
                utterance_id: r.utterance_id.clone(),
                message,
            }),
        }
    }
    let processed = m.derive(kept).with_base_dir(out);
    save_manifest(stage, &out.join("manifest.jsonl"), &processed)?;
    write_jsonl(&out.join("report.jsonl"), &entries)?;
    let outcome = StageOutcome {
        stage,
        records_in: m.len(),
        records_out: processed.len(),
        failures,
    };
    Ok((processed, outcome))
}

/// Rewrites transcripts with the text normalizer.
pub fn normalize_manifest_text(m: &Manifest, rules: &NormalizationRules) -> Manifest {
    m.derive(
        m.records
            .iter()
            .map(|r| UtteranceRecord {
                text: normalize_text(&r.text, rules),
                ..r.clone()
            })
            .collect(),
    )
}

pub fn split_stage(m: &Manifest, cfg: &SplitConfig, out: &Path) -> Result<(Manifest, StageOutcome), PipelineError> {
    let stage = Stage::Split;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let s = make_splits(m, cfg).map_err(|e| stage_err(stage)(&e))?;
    let train = rebase(&s.train, out);
    save_manifest(stage, &out.join("train.jsonl"), &train)?;
    save_manifest(stage, &out.join("dev.jsonl"), &rebase(&s.dev, out))?;
    save_manifest(stage, &out.join("test.jsonl"), &rebase(&s.test, out))?;
    write_json(&out.join("split_report.json"), &s.report)?;
    let outcome = StageOutcome {
        stage,
        records_in: m.len(),
        records_out: m.len(),
        failures: Vec::new(),
    };
    Ok((train, outcome))
}

pub fn balance_stage(
    train: &Manifest,
    cfg: &BalanceConfig,
    out: &Path,
) -> Result<(Manifest, StageOutcome), PipelineError> {
    let stage = Stage::Balance;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let (balanced, report) = balance_duplicate(train, cfg).map_err(|e| stage_err(stage)(&e))?;
    let balanced = rebase(&balanced, out);
    save_manifest(stage, &out.join("train.jsonl"), &balanced)?;
    write_json(&out.join("balance_report.json"), &report)?;
    let outcome = StageOutcome {
        stage,
        records_in: train.len(),
        records_out: balanced.len(),
        failures: Vec::new(),
    };
    Ok((balanced, outcome))
}

/// Per-speaker embeddings: the mean of utterance embeddings, re-normalized.
/// Speaker metadata comes from the speaker's first record.
pub fn embed_speakers(
    m: &Manifest,
    embedder: &dyn Adapter,
    workers: usize,
) -> Result<(Vec<EmbeddingRecord>, Vec<StageFailure>), PipelineError> {
    let results: Vec<Result<Vec<f64>, String>> = thread_pool(workers).install(|| {
        m.records
            .par_iter()
            .map(|r| {
                let path = m.resolve_audio(r);
                let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                call_embedding(embedder, &bytes).map_err(|e| e.to_string())
            })
            .collect()
    });
    let mut sums: BTreeMap<&str, (SpeakerMeta, Vec<f64>)> = BTreeMap::new();
    let mut failures = Vec::new();
    for (r, res) in m.records.iter().zip(results) {
        match res {
            Ok(v) => {
                let (_, acc) = sums.entry(&r.speaker_id).or_insert_with(|| {
                    (
                        SpeakerMeta {
                            gender: r.gender,
                            country: r.country.clone(),
                            accent: r.accent.clone(),
                        },
                        vec![0.0; v.len()],
                    )
                });
                if acc.len() != v.len() {
                    failures.push(StageFailure {
                        utterance_id: r.utterance_id.clone(),
                        message: format!("embedding length {} differs from {}", v.len(), acc.len()),
                    });
                    continue;
                }
                acc.iter_mut().zip(&v).for_each(|(a, x)| *a += x);
            }
            Err(message) => failures.push(StageFailure {
                utterance_id: r.utterance_id.clone(),
                message,
            }),
        }
    }
    let mut out = Vec::new();
    for (spk, (meta, v)) in sums {
        match SpeakerEmbedding::normalized(spk, v, meta) {
            Ok(e) => out.push(e.to_record()),
            Err(e) => failures.push(StageFailure {
                utterance_id: spk.to_string(),
                message: e.to_string(),
            }),
        }
    }
    Ok((out, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolateOptions {
    pub embeddings: Option<PathBuf>,
    /// Explicit personas; when empty every within-group pair and triple is
    /// enumerated.
    pub personas: Vec<PersonaSpec>,
    pub alpha: f64,
    pub max_sources: usize,
    pub cap: Option<usize>,
    pub policy: InterpolationPolicy,
}

impl Default for InterpolateOptions {
    fn default() -> Self {
        InterpolateOptions {
            embeddings: None,
            personas: Vec::new(),
            alpha: DEFAULT_ALPHA,
            max_sources: MAX_SOURCES,
            cap: None,
            policy: InterpolationPolicy::default(),
        }
    }
}

pub fn build_personas(store: &EmbeddingStore, opts: &InterpolateOptions) -> Result<Vec<Persona>, SpeakerError> {
    if opts.personas.is_empty() {
        return generate_personas(store, opts.max_sources, opts.alpha, opts.cap);
    }
    opts.personas
        .iter()
        .map(|spec| {
            Ok(Persona {
                spec: spec.clone(),
                embedding: interpolate(spec, store, opts.policy)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    rules: NormalizationRules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcomes: Vec<StageOutcome>,
}

impl RunSummary {
    pub fn failure_count(&self) -> usize {
        self.outcomes.iter().map(|o| o.failures.len()).sum()
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let rules = load_rules(cfg.rules.as_deref())?;
        Ok(Pipeline { cfg, rules })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.cfg.out_dir.join(stage.as_str())
    }

    fn stage_manifest(&self, stage: Stage) -> PathBuf {
        match stage {
            Stage::Split | Stage::Balance => self.stage_dir(stage).join("train.jsonl"),
            _ => self.stage_dir(stage).join("manifest.jsonl"),
        }
    }

    fn upstream(stage: Stage) -> &'static [Stage] {
        match stage {
            Stage::Ingest | Stage::Interpolate => &[],
            Stage::Enhance => &[Stage::Ingest],
            Stage::Preprocess => &[Stage::Enhance, Stage::Ingest],
            Stage::Embed => &[Stage::Preprocess, Stage::Enhance, Stage::Ingest],
            Stage::NormalizeText => &[Stage::Preprocess, Stage::Enhance, Stage::Ingest],
            Stage::Split => &[Stage::Preprocess, Stage::Enhance, Stage::Ingest],
            Stage::Balance => &[Stage::Split, Stage::Preprocess, Stage::Enhance, Stage::Ingest],
        }
    }

    /// Manifest a stage reads: the output of the nearest upstream stage that
    /// has run, or the configured input manifest if none has.
    fn input_for(&self, stage: Stage) -> (PathBuf, ManifestFormat) {
        let upstream = Self::upstream(stage)
            .iter()
            .copied()
            .filter(|&s| s != Stage::Enhance || self.cfg.registry.is_some());
        for s in upstream {
            let p = self.stage_manifest(s);
            if p.is_file() {
                return (p, ManifestFormat::Jsonl);
            }
        }
        let format = self
            .cfg
            .manifest_format
            .unwrap_or_else(|| ManifestFormat::from_path(&self.cfg.manifest));
        (self.cfg.manifest.clone(), format)
    }

    fn settings_digest(&self, stage: Stage) -> String {
        let v = match stage {
            Stage::Ingest => serde_json::json!({ "format": self.cfg.manifest_format }),
            Stage::Enhance => serde_json::json!({ "workers": self.cfg.workers }),
            Stage::Preprocess => serde_json::json!({ "dsp": self.cfg.dsp, "rules": self.rules }),
            Stage::Split => serde_json::to_value(self.cfg.split_config()).expect("serializes"),
            Stage::Balance => serde_json::to_value(&self.cfg.balance).expect("serializes"),
            Stage::NormalizeText => serde_json::to_value(&self.rules).expect("serializes"),
            Stage::Embed => serde_json::json!({ "workers": self.cfg.workers }),
            Stage::Interpolate => serde_json::Value::Null,
        };
        sha256_hex(v.to_string().as_bytes())
    }

    /// Clears the stage directory, runs `f` in it and records the outputs.
    fn run_in<F>(&self, stage: Stage, mut inputs: BTreeMap<String, String>, f: F) -> Result<StageOutcome, PipelineError>
    where
        F: FnOnce(&Path, &mut BTreeMap<String, String>) -> Result<StageOutcome, PipelineError>,
    {
        let out = self.stage_dir(stage);
        if out.exists() {
            std::fs::remove_dir_all(&out).map_err(io_err(&out))?;
        }
        std::fs::create_dir_all(&out).map_err(io_err(&out))?;
        inputs.insert("settings".to_string(), self.settings_digest(stage));
        let outcome = f(&out, &mut inputs)?;
        for fail in &outcome.failures {
            warn!("{stage}: {}: {}", fail.utterance_id, fail.message);
        }
        self.record(stage, inputs, &outcome)?;
        Ok(outcome)
    }

    fn registry(&self) -> Result<(&Path, Registry), PipelineError> {
        let path = self
            .cfg
            .registry
            .as_deref()
            .ok_or_else(|| PipelineError::Config("registry: no adapter registry configured".into()))?;
        Ok((path, load_registry(path)?))
    }

    /// Runs one manifest stage (a pipeline stage or text normalization).
    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        match stage {
            Stage::Embed => return self.embed(),
            Stage::Interpolate => return self.interpolate(&InterpolateOptions::default()),
            _ => {}
        }
        let (input, format) = self.input_for(stage);
        info!("{stage}: reading {}", input.display());
        let mut inputs = BTreeMap::new();
        inputs.insert("manifest".to_string(), file_digest(&input)?);
        self.run_in(stage, inputs, |out, inputs| {
            Ok(match stage {
                Stage::Ingest => ingest(&input, Some(format), out)?.1,
                Stage::Enhance => {
                    let (path, registry) = self.registry()?;
                    inputs.insert("registry".to_string(), file_digest(path)?);
                    for kind in [AdapterKind::Denoiser, AdapterKind::Restorer, AdapterKind::QualityEstimator] {
                        registry
                            .get(kind)
                            .map_err(|e| PipelineError::Config(format!("registry: {e}")))?;
                    }
                    enhance_stage(&read_manifest(stage, &input, format)?, &registry, out, self.cfg.workers)?.1
                }
                Stage::Preprocess => {
                    let m = read_manifest(stage, &input, format)?;
                    preprocess(&m, &self.cfg.dsp, &self.rules, out, self.cfg.workers)?.1
                }
                Stage::Split => split_stage(&read_manifest(stage, &input, format)?, &self.cfg.split_config(), out)?.1,
                Stage::Balance => balance_stage(&read_manifest(stage, &input, format)?, &self.cfg.balance, out)?.1,
                Stage::NormalizeText => {
                    let m = read_manifest(stage, &input, format)?;
                    let normalized = rebase(&normalize_manifest_text(&m, &self.rules), out);
                    save_manifest(stage, &out.join("manifest.jsonl"), &normalized)?;
                    StageOutcome {
                        stage,
                        records_in: m.len(),
                        records_out: normalized.len(),
                        failures: Vec::new(),
                    }
                }
                Stage::Embed | Stage::Interpolate => unreachable!("handled above"),
            })
        })
    }

    /// Speaker embeddings from the configured embedder adapter, written to
    /// `embed/speakers.jsonl`.
    pub fn embed(&self) -> Result<StageOutcome, PipelineError> {
        let stage = Stage::Embed;
        let (input, format) = self.input_for(stage);
        let mut inputs = BTreeMap::new();
        inputs.insert("manifest".to_string(), file_digest(&input)?);
        let (path, registry) = self.registry()?;
        inputs.insert("registry".to_string(), file_digest(path)?);
        let embedder = registry
            .get(AdapterKind::Embedder)
            .map_err(|e| PipelineError::Config(format!("registry: {e}")))?;
        self.run_in(stage, inputs, |out, _| {
            let m = read_manifest(stage, &input, format)?;
            let (records, failures) = embed_speakers(&m, embedder, self.cfg.workers)?;
            write_embedding_records(&out.join("speakers.jsonl"), &records).map_err(|e| stage_err(stage)(&e))?;
            Ok(StageOutcome {
                stage,
                records_in: m.len(),
                records_out: records.len(),
                failures,
            })
        })
    }

    /// Writes personas to `interpolate/personas.jsonl`, reading embeddings
    /// from `opts.embeddings` or the embed stage output.
    pub fn interpolate(&self, opts: &InterpolateOptions) -> Result<StageOutcome, PipelineError> {
        let stage = Stage::Interpolate;
        let source = opts
            .embeddings
            .clone()
            .unwrap_or_else(|| self.stage_dir(Stage::Embed).join("speakers.jsonl"));
        if !source.is_file() {
            return Err(PipelineError::Stage {
                stage,
                message: format!("embeddings {} missing; run 'embed' first", source.display()),
            });
        }
        let mut inputs = BTreeMap::new();
        inputs.insert("embeddings".to_string(), file_digest(&source)?);
        inputs.insert(
            "options".to_string(),
            sha256_hex(serde_json::to_string(opts).expect("serializes").as_bytes()),
        );
        self.run_in(stage, inputs, |out, _| {
            let store = import_embeddings(&source).map_err(|e| stage_err(stage)(&e))?;
            let personas = build_personas(&store, opts).map_err(|e| stage_err(stage)(&e))?;
            let records: Vec<EmbeddingRecord> = personas.iter().map(Persona::to_record).collect();
            write_embedding_records(&out.join("personas.jsonl"), &records).map_err(|e| stage_err(stage)(&e))?;
            Ok(StageOutcome {
                stage,
                records_in: store.len(),
                records_out: records.len(),
                failures: Vec::new(),
            })
        })
    }

    /// Runs every stage in order; enhance is skipped without a registry.
    pub fn run_all(&self) -> Result<RunSummary, PipelineError> {
        let mut outcomes = Vec::new();
        for stage in Stage::PIPELINE {
            if stage == Stage::Enhance && self.cfg.registry.is_none() {
                info!("enhance: skipped, no registry configured");
                continue;
            }
            outcomes.push(self.run_stage(stage)?);
        }
        Ok(RunSummary { outcomes })
    }

    fn record(
        &self,
        stage: Stage,
        inputs: BTreeMap<String, String>,
        outcome: &StageOutcome,
    ) -> Result<(), PipelineError> {
        let dir = self.stage_dir(stage);
        let mut outputs = BTreeMap::new();
        let mut stack = vec![dir.clone()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).map_err(io_err(&d))? {
                let path = entry.map_err(io_err(&d))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = relative_path(&path, &self.cfg.out_dir);
                    outputs.insert(rel.to_string_lossy().replace('\\', "/"), file_digest(&path)?);
                }
            }
        }
        let path = self.cfg.out_dir.join(RUN_MANIFEST);
        let config_sha256 = self.cfg.digest();
        let mut run = std::fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
            .filter(|r| r.config_sha256 == config_sha256 && r.seed == self.cfg.seed)
            .unwrap_or(RunManifest {
                config_sha256,
                seed: self.cfg.seed,
                stages: Vec::new(),
            });
        run.stages.retain(|s| s.stage != stage);
        run.stages.push(StageRecord {
            stage,
            inputs,
            outputs,
            failures: outcome.failures.len(),
        });
        run.stages.sort_by_key(|s| s.stage);
        write_json(&path, &run)
    }
}
