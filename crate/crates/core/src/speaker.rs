//! Speaker embeddings, cosine similarity and persona synthesis by linear
//! interpolation of embeddings.
//!
//! A blend is `Σ wᵢ·Sᵢ` re-normalized to unit length, because a weighted sum
//! of non-parallel unit vectors is shorter than one and downstream consumers
//! expect l2-normalized input. Blends are restricted to speakers sharing
//! gender, country and accent unless the policy says otherwise.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Gender;

pub const EMBEDDING_DIM: usize = 256;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const MAX_SOURCES: usize = 3;
const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum SpeakerError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("speaker '{id}': dimension {found} ≠ {EMBEDDING_DIM}")]
    Dimension { id: String, found: usize },
    #[error("speaker '{id}': component {index} is not finite")]
    NonFinite { id: String, index: usize },
    #[error("speaker '{0}': zero vector cannot be normalized")]
    ZeroVector(String),
    #[error("speaker '{id}': norm {norm} is not 1")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("duplicate speaker_id '{0}'")]
    Duplicate(String),
    #[error("unknown source speaker '{0}'")]
    UnknownSource(String),
    #[error("invalid persona: {0}")]
    InvalidPersona(String),
    #[error("sources '{0}' and '{1}' differ in gender, country or accent")]
    MixedGroup(String, String),
    #[error("weighted sum of sources is the zero vector")]
    DegenerateBlend,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpeakerMeta {
    #[serde(default)]
    pub gender: Gender,
    pub country: String,
    pub accent: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub speaker_id: String,
    pub vector: Vec<f64>,
    pub meta: SpeakerMeta,
}

/// On-disk form: one JSON object per line. Persona files add `sources`,
/// `weights` and `renormalized`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub speaker_id: String,
    #[serde(default)]
    pub gender: Gender,
    pub country: String,
    pub accent: String,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renormalized: Option<bool>,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SpeakerEmbedding {
    /// Checks dimension and finiteness, then scales to unit norm.
    pub fn normalized(
        speaker_id: impl Into<String>,
        mut vector: Vec<f64>,
        meta: SpeakerMeta,
    ) -> Result<Self, SpeakerError> {
        let id = speaker_id.into();
        if vector.len() != EMBEDDING_DIM {
            return Err(SpeakerError::Dimension {
                id,
                found: vector.len(),
            });
        }
        if let Some(index) = vector.iter().position(|x| !x.is_finite()) {
            return Err(SpeakerError::NonFinite { id, index });
        }
        let norm = l2(&vector);
        if norm == 0.0 {
            return Err(SpeakerError::ZeroVector(id));
        }
        vector.iter_mut().for_each(|x| *x /= norm);
        Ok(SpeakerEmbedding {
            speaker_id: id,
            vector,
            meta,
        })
    }

    pub fn norm(&self) -> f64 {
        l2(&self.vector)
    }

    pub fn to_record(&self) -> EmbeddingRecord {
        EmbeddingRecord {
            speaker_id: self.speaker_id.clone(),
            gender: self.meta.gender,
            country: self.meta.country.clone(),
            accent: self.meta.accent.clone(),
            vector: self.vector.clone(),
            sources: None,
            weights: None,
            renormalized: None,
        }
    }
}

/// Dot product of two unit-norm embeddings, clamped to [-1, 1].
pub fn cosine_similarity(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> f64 {
    cosine(&a.vector, &b.vector)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Read-only embeddings indexed by speaker id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    speakers: BTreeMap<String, SpeakerEmbedding>,
}

impl EmbeddingStore {
    pub fn from_embeddings(
        embeddings: impl IntoIterator<Item = SpeakerEmbedding>,
    ) -> Result<Self, SpeakerError> {
        let mut speakers = BTreeMap::new();
        for e in embeddings {
            let norm = e.norm();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(SpeakerError::NotUnitNorm {
                    id: e.speaker_id,
                    norm,
                });
            }
            if speakers.contains_key(&e.speaker_id) {
                return Err(SpeakerError::Duplicate(e.speaker_id));
            }
            speakers.insert(e.speaker_id.clone(), e);
        }
        Ok(EmbeddingStore { speakers })
    }

    pub fn get(&self, id: &str) -> Option<&SpeakerEmbedding> {
        self.speakers.get(id)
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SpeakerEmbedding> {
        self.speakers.values()
    }
}

/// Loads an embedding JSONL file, re-normalizing every vector.
pub fn import_embeddings(path: &Path) -> Result<EmbeddingStore, SpeakerError> {
    let io_err = |source| SpeakerError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut embeddings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| SpeakerError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        let meta = SpeakerMeta {
            gender: rec.gender,
            country: rec.country,
            accent: rec.accent,
        };
        embeddings.push(SpeakerEmbedding::normalized(rec.speaker_id, rec.vector, meta)?);
    }
    EmbeddingStore::from_embeddings(embeddings)
}

pub fn write_embedding_records(path: &Path, records: &[EmbeddingRecord]) -> Result<(), SpeakerError> {
    let io_err = |source| SpeakerError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("records serialize")).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub new_speaker_id: String,
    pub sources: Vec<String>,
    pub weights: Vec<f64>,
}

impl PersonaSpec {
    /// Two-speaker blend `alpha·S1 + (1-alpha)·S2`.
    pub fn pair(new_id: impl Into<String>, s1: &str, s2: &str, alpha: f64) -> Self {
        PersonaSpec {
            new_speaker_id: new_id.into(),
            sources: vec![s1.to_string(), s2.to_string()],
            weights: vec![alpha, 1.0 - alpha],
        }
    }

    pub fn validate(&self) -> Result<(), SpeakerError> {
        let k = self.sources.len();
        if !(2..=MAX_SOURCES).contains(&k) {
            return Err(SpeakerError::InvalidPersona(format!(
                "{k} sources; expected 2 to {MAX_SOURCES}"
            )));
        }
        if self.weights.len() != k {
            return Err(SpeakerError::InvalidPersona(format!(
                "{} weights for {k} sources",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(SpeakerError::InvalidPersona("weights must be positive".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SpeakerError::InvalidPersona(format!("weights sum to {sum}")));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if self.sources[..i].contains(s) {
                return Err(SpeakerError::InvalidPersona(format!("source '{s}' repeated")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpolationPolicy {
    /// Permit blending speakers whose gender, country or accent differ.
    pub allow_cross_group: bool,
}

/// Weighted sum re-normalized to unit length. A weight of exactly 1 returns
/// that source unchanged.
pub fn blend(sources: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>, SpeakerError> {
    debug_assert_eq!(sources.len(), weights.len());
    if let Some(i) = weights.iter().position(|&w| w == 1.0) {
        return Ok(sources[i].to_vec());
    }
    let dim = sources.first().map_or(0, |s| s.len());
    let mut out = vec![0.0; dim];
    for (src, &w) in sources.iter().zip(weights) {
        for (o, x) in out.iter_mut().zip(src.iter()) {
            *o += w * x;
        }
    }
    let norm = l2(&out);
    if norm < 1e-12 {
        return Err(SpeakerError::DegenerateBlend);
    }
    out.iter_mut().for_each(|x| *x /= norm);
    Ok(out)
}

fn check_group(sources: &[&SpeakerEmbedding], policy: InterpolationPolicy) -> Result<(), SpeakerError> {
    if policy.allow_cross_group {
        return Ok(());
    }
    let first = sources[0];
    match sources[1..].iter().find(|s| s.meta != first.meta) {
        Some(other) => Err(SpeakerError::MixedGroup(
            first.speaker_id.clone(),
            other.speaker_id.clone(),
        )),
        None => Ok(()),
    }
}

/// Blends two embeddings with `alpha` in [0, 1]; the endpoints return a
/// source exactly. The result carries `new_id` and the first source's meta.
pub fn interpolate_pair(
    new_id: &str,
    s1: &SpeakerEmbedding,
    s2: &SpeakerEmbedding,
    alpha: f64,
    policy: InterpolationPolicy,
) -> Result<SpeakerEmbedding, SpeakerError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SpeakerError::InvalidPersona(format!("alpha {alpha} outside [0, 1]")));
    }
    check_group(&[s1, s2], policy)?;
    let vector = blend(&[&s1.vector, &s2.vector], &[alpha, 1.0 - alpha])?;
    Ok(SpeakerEmbedding {
        speaker_id: new_id.to_string(),
        vector,
        meta: s1.meta.clone(),
    })
}

/// Builds the persona described by `spec` from embeddings in `store`.
pub fn interpolate(
    spec: &PersonaSpec,
    store: &EmbeddingStore,
    policy: InterpolationPolicy,
) -> Result<SpeakerEmbedding, SpeakerError> {
    spec.validate()?;
    let sources = spec
        .sources
        .iter()
        .map(|id| store.get(id).ok_or_else(|| SpeakerError::UnknownSource(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    check_group(&sources, policy)?;
    let vectors: Vec<&[f64]> = sources.iter().map(|s| s.vector.as_slice()).collect();
    Ok(SpeakerEmbedding {
        speaker_id: spec.new_speaker_id.clone(),
        vector: blend(&vectors, &spec.weights)?,
        meta: sources[0].meta.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Persona {
    pub spec: PersonaSpec,
    pub embedding: SpeakerEmbedding,
}

impl Persona {
    pub fn to_record(&self) -> EmbeddingRecord {
        EmbeddingRecord {
            sources: Some(self.spec.sources.clone()),
            weights: Some(self.spec.weights.clone()),
            renormalized: Some(true),
            ..self.embedding.to_record()
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Enumerates blends within each (gender, country, accent) group.
///
/// Groups are visited in sorted order; within a group speakers are sorted by
/// id and all pairs (weights `alpha`, `1 - alpha`) are listed before all
/// triples (equal weights), in lexicographic order. The list stops at `cap`.
/// Persona ids are `blend::` followed by the source ids joined with `+`.
pub fn generate_personas(
    store: &EmbeddingStore,
    max_sources: usize,
    alpha: f64,
    cap: Option<usize>,
) -> Result<Vec<Persona>, SpeakerError> {
    let mut groups: BTreeMap<&SpeakerMeta, Vec<&SpeakerEmbedding>> = BTreeMap::new();
    for e in store.iter() {
        groups.entry(&e.meta).or_default().push(e);
    }
    let cap = cap.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    for members in groups.values() {
        // BTreeMap iteration already yields ids in sorted order.
        for k in 2..=max_sources.min(MAX_SOURCES) {
            for combo in combinations(members.len(), k) {
                if out.len() >= cap {
                    return Ok(out);
                }
                let sources: Vec<String> =
                    combo.iter().map(|&i| members[i].speaker_id.clone()).collect();
                let weights = if k == 2 {
                    vec![alpha, 1.0 - alpha]
                } else {
                    vec![1.0 / k as f64; k]
                };
                let spec = PersonaSpec {
                    new_speaker_id: format!("blend::{}", sources.join("+")),
                    sources,
                    weights,
                };
                let embedding = interpolate(&spec, store, InterpolationPolicy::default())?;
                out.push(Persona { spec, embedding });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(accent: &str) -> SpeakerMeta {
        SpeakerMeta {
            gender: Gender::Female,
            country: "NG".into(),
            accent: accent.into(),
        }
    }

    fn axis(k: usize) -> Vec<f64> {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[k] = 1.0;
        v
    }

    fn emb(id: &str, v: Vec<f64>, accent: &str) -> SpeakerEmbedding {
        SpeakerEmbedding::normalized(id, v, meta(accent)).unwrap()
    }

    #[test]
    fn normalization_and_dimension_errors() {
        let mut v = axis(3);
        v[3] = 2.0;
        let e = emb("a", v, "igbo");
        assert!((e.norm() - 1.0).abs() < 1e-6);
        let err = SpeakerEmbedding::normalized("b", vec![1.0; 128], meta("igbo")).unwrap_err();
        assert_eq!(err.to_string(), "speaker 'b': dimension 128 ≠ 256");
        let mut bad = axis(0);
        bad[5] = f64::INFINITY;
        assert!(matches!(
            SpeakerEmbedding::normalized("c", bad, meta("igbo")),
            Err(SpeakerError::NonFinite { index: 5, .. })
        ));
        assert!(matches!(
            EmbeddingStore::from_embeddings([emb("a", axis(0), "x"), emb("a", axis(1), "x")]),
            Err(SpeakerError::Duplicate(_))
        ));
    }

    #[test]
    fn cosine_examples() {
        let a = emb("a", axis(0), "x");
        let b = emb("b", axis(1), "x");
        assert_eq!(cosine_similarity(&a, &a), 1.0);
        assert_eq!(cosine_similarity(&a, &b), 0.0);
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[0] = 0.6;
        v[1] = 0.8;
        let c = emb("c", v, "x");
        assert!((cosine_similarity(&c, &a) - 0.6).abs() < 1e-12);
        assert_eq!(cosine_similarity(&c, &a), cosine_similarity(&a, &c));
    }

    #[test]
    fn interpolation_examples() {
        let store = EmbeddingStore::from_embeddings([
            emb("s1", axis(0), "x"),
            emb("s2", axis(1), "x"),
            emb("s3", axis(2), "x"),
        ])
        .unwrap();
        let p = PersonaSpec::pair("n", "s1", "s2", 0.5);
        let s3 = interpolate(&p, &store, InterpolationPolicy::default()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s3.vector[0] - h).abs() < 1e-12 && (s3.vector[1] - h).abs() < 1e-12);

        let tri = PersonaSpec {
            new_speaker_id: "t".into(),
            sources: vec!["s1".into(), "s2".into(), "s3".into()],
            weights: vec![1.0 / 3.0; 3],
        };
        let t = interpolate(&tri, &store, InterpolationPolicy::default()).unwrap();
        for k in 0..3 {
            assert!((t.vector[k] - 0.57735).abs() < 1e-5);
        }

        let s1 = store.get("s1").unwrap();
        let s2 = store.get("s2").unwrap();
        let end = interpolate_pair("e", s1, s2, 1.0, InterpolationPolicy::default()).unwrap();
        assert_eq!(end.vector, s1.vector);
        let end = interpolate_pair("e", s1, s2, 0.0, InterpolationPolicy::default()).unwrap();
        assert_eq!(end.vector, s2.vector);
    }

    #[test]
    fn interpolation_errors() {
        let store = EmbeddingStore::from_embeddings([
            emb("s1", axis(0), "hausa"),
            emb("s2", axis(1), "yoruba"),
            emb("s3", axis(2), "hausa"),
        ])
        .unwrap();
        let policy = InterpolationPolicy::default();
        assert!(matches!(
            interpolate(&PersonaSpec::pair("n", "s1", "zz", 0.5), &store, policy),
            Err(SpeakerError::UnknownSource(_))
        ));
        assert!(matches!(
            interpolate(&PersonaSpec::pair("n", "s1", "s2", 0.5), &store, policy),
            Err(SpeakerError::MixedGroup(..))
        ));
        let open = InterpolationPolicy { allow_cross_group: true };
        assert!(interpolate(&PersonaSpec::pair("n", "s1", "s2", 0.5), &store, open).is_ok());
        assert!(matches!(
            interpolate(&PersonaSpec::pair("n", "s1", "s3", 1.0), &store, policy),
            Err(SpeakerError::InvalidPersona(_))
        ));
        let four = PersonaSpec {
            new_speaker_id: "n".into(),
            sources: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            weights: vec![0.25; 4],
        };
        assert!(matches!(four.validate(), Err(SpeakerError::InvalidPersona(_))));
        let mut neg = axis(0);
        neg[0] = -1.0;
        let opposite = EmbeddingStore::from_embeddings([emb("p", axis(0), "x"), emb("q", neg, "x")]).unwrap();
        assert!(matches!(
            interpolate(&PersonaSpec::pair("n", "p", "q", 0.5), &opposite, policy),
            Err(SpeakerError::DegenerateBlend)
        ));
    }

    #[test]
    fn persona_enumeration_counts() {
        let mut all = Vec::new();
        let mut k = 0;
        for (accent, size) in [("a", 1), ("b", 3)] {
            for i in 0..size {
                all.push(emb(&format!("{accent}{i}"), axis(k), accent));
                k += 1;
            }
        }
        let store = EmbeddingStore::from_embeddings(all).unwrap();
        let personas = generate_personas(&store, 3, 0.5, None).unwrap();
        let ids: Vec<_> = personas.iter().map(|p| p.spec.new_speaker_id.as_str()).collect();
        assert_eq!(ids, ["blend::b0+b1", "blend::b0+b2", "blend::b1+b2", "blend::b0+b1+b2"]);
        assert_eq!(generate_personas(&store, 2, 0.5, None).unwrap().len(), 3);
        assert_eq!(generate_personas(&store, 3, 0.5, Some(2)).unwrap().len(), 2);
        let rec = personas[0].to_record();
        assert_eq!(rec.renormalized, Some(true));
        assert_eq!(rec.sources.as_deref(), Some(&["b0".to_string(), "b1".to_string()][..]));
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let mut v = axis(1);
        v[1] = 3.0;
        let recs = vec![EmbeddingRecord {
            speaker_id: "s".into(),
            gender: Gender::Male,
            country: "KE".into(),
            accent: "swahili".into(),
            vector: v,
            sources: None,
            weights: None,
            renormalized: None,
        }];
        write_embedding_records(&path, &recs).unwrap();
        let store = import_embeddings(&path).unwrap();
        assert_eq!(store.len(), 1);
        assert!((store.get("s").unwrap().norm() - 1.0).abs() < 1e-12);
    }

    fn unit_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, EMBEDDING_DIM)
            .prop_filter("non-zero", |v| l2(v) > 1e-3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn blend_stays_between_sources(a in unit_vec(), b in unit_vec(), alpha in 0.01f64..0.99) {
            let s1 = emb("a", a, "x");
            let s2 = emb("b", b, "x");
            let c12 = cosine_similarity(&s1, &s2);
            prop_assume!(c12 > -0.99);
            let s3 = interpolate_pair("n", &s1, &s2, alpha, InterpolationPolicy::default()).unwrap();
            prop_assert!((s3.norm() - 1.0).abs() < 1e-6);
            if c12 >= 0.0 {
                prop_assert!(cosine_similarity(&s3, &s1) >= c12 - 1e-12);
            }
            let mid = interpolate_pair("m", &s1, &s2, 0.5, InterpolationPolicy::default()).unwrap();
            prop_assert!((cosine_similarity(&mid, &s1) - cosine_similarity(&mid, &s2)).abs() < 1e-6);
            let near = interpolate_pair("e", &s1, &s2, 0.999_999, InterpolationPolicy::default()).unwrap();
            prop_assert!(cosine_similarity(&near, &s1) > 0.999);
        }
    }
}
