//! Seeded inputs shared by the benchmarks.

use afroforge_core::dsp::AudioBuffer;
use afroforge_core::metrics::ScoreTrials;
use afroforge_core::speaker::{EmbeddingStore, SpeakerEmbedding, SpeakerMeta, EMBEDDING_DIM};
use afroforge_core::corpus::Gender;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: &[&str] = &["the", "a", "market", "Lagos", "opens", "at", "seven", "Musa", "paid", "for", "yams"];

pub fn sentence_pair(words: usize, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference: Vec<&str> = (0..words).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
    let hypothesis: Vec<&str> = reference
        .iter()
        .filter_map(|w| match rng.random_range(0..10) {
            0 => None,
            1 => Some(VOCAB[rng.random_range(0..VOCAB.len())]),
            _ => Some(*w),
        })
        .collect();
    (reference.join(" "), hypothesis.join(" "))
}

pub fn trials(per_side: usize, seed: u64) -> ScoreTrials {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreTrials {
        genuine: (0..per_side).map(|_| rng.random_range(0.3..1.0)).collect(),
        impostor: (0..per_side).map(|_| rng.random_range(0.0..0.7)).collect(),
    }
}

/// Noisy tone with silent gaps, `secs` long.
pub fn speech_like(secs: f64, sample_rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * sample_rate as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let gate = if (t * 2.0) as usize % 3 == 2 { 0.0 } else { 1.0 };
            (gate * 0.3 * (2.0 * std::f64::consts::PI * 180.0 * t).sin()) as f32 + rng.random_range(-1e-3..1e-3)
        })
        .collect();
    AudioBuffer::new(samples, sample_rate).expect("finite samples")
}

pub fn unit_vector(rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// `speakers` embeddings in one (gender, country, accent) group.
pub fn one_group_store(speakers: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meta = SpeakerMeta {
        gender: Gender::Female,
        country: "NG".into(),
        accent: "yoruba".into(),
    };
    let embeddings: Vec<SpeakerEmbedding> = (0..speakers)
        .map(|i| SpeakerEmbedding::normalized(format!("s{i:03}"), unit_vector(&mut rng), meta.clone()).unwrap())
        .collect();
    EmbeddingStore::from_embeddings(embeddings).unwrap()
}
