//! Train/dev/test partitioning and per-speaker duration balancing.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Manifest, Replica, UtteranceRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("invalid split config: {0}")]
    InvalidConfig(String),
    #[error("test_size {requested} exceeds the {available} samples in groups above {minutes} min")]
    TestTooLarge {
        requested: usize,
        available: usize,
        minutes: f64,
    },
    #[error("dev_size {requested} exceeds the {available} samples left after the test split")]
    DevTooLarge { requested: usize, available: usize },
    #[error("invalid balance target {0} min")]
    InvalidTarget(f64),
    #[error("speaker '{0}' has zero total duration")]
    ZeroDuration(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_min_group_minutes: f64,
    pub test_size: usize,
    pub dev_size: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_min_group_minutes: 20.0,
            test_size: 736,
            dev_size: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPick {
    pub speaker_id: String,
    pub accent: String,
    pub group_minutes: f64,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Every group eligible for test sampling, including those with no picks.
    pub test_groups: Vec<GroupPick>,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Manifest,
    pub dev: Manifest,
    pub test: Manifest,
    pub report: SplitReport,
}

/// Splits `m` into disjoint train, dev and test sets.
///
/// Test samples come from (speaker, accent) groups whose total duration
/// exceeds `test_min_group_minutes`. Groups are visited round-robin in a
/// seeded order, each yielding one seeded-shuffled utterance per pass, until
/// `test_size` is reached. Dev is a seeded uniform draw from the remainder.
/// Each output keeps the input record order.
pub fn make_splits(m: &Manifest, cfg: &SplitConfig) -> Result<Splits, SplitError> {
    if !(cfg.test_min_group_minutes.is_finite() && cfg.test_min_group_minutes > 0.0) {
        return Err(SplitError::InvalidConfig(format!(
            "test_min_group_minutes must be positive, got {}",
            cfg.test_min_group_minutes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut groups: BTreeMap<(&str, &str), (f64, Vec<usize>)> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        let g = groups.entry((&r.speaker_id, &r.accent)).or_default();
        g.0 += r.duration_s;
        g.1.push(i);
    }
    let threshold_s = cfg.test_min_group_minutes * 60.0;
    let mut eligible: Vec<((&str, &str), f64, Vec<usize>)> = groups
        .into_iter()
        .filter(|(_, (secs, _))| *secs > threshold_s)
        .map(|(k, (secs, idx))| (k, secs, idx))
        .collect();
    let available: usize = eligible.iter().map(|g| g.2.len()).sum();
    if cfg.test_size > available {
        return Err(SplitError::TestTooLarge {
            requested: cfg.test_size,
            available,
            minutes: cfg.test_min_group_minutes,
        });
    }

    for g in eligible.iter_mut() {
        g.2.shuffle(&mut rng);
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.shuffle(&mut rng);

    let mut in_test = vec![false; m.len()];
    let mut picks = vec![0usize; eligible.len()];
    let mut taken = 0;
    let mut pass = 0;
    while taken < cfg.test_size {
        for &gi in &order {
            if taken == cfg.test_size {
                break;
            }
            if let Some(&idx) = eligible[gi].2.get(pass) {
                in_test[idx] = true;
                picks[gi] += 1;
                taken += 1;
            }
        }
        pass += 1;
    }

    let mut remainder: Vec<usize> = (0..m.len()).filter(|&i| !in_test[i]).collect();
    if cfg.dev_size > remainder.len() {
        return Err(SplitError::DevTooLarge {
            requested: cfg.dev_size,
            available: remainder.len(),
        });
    }
    remainder.shuffle(&mut rng);
    let mut in_dev = vec![false; m.len()];
    for &i in &remainder[..cfg.dev_size] {
        in_dev[i] = true;
    }

    let pick = |keep: &dyn Fn(usize) -> bool| {
        m.derive(
            m.records
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, r)| r.clone())
                .collect(),
        )
    };
    let test = pick(&|i| in_test[i]);
    let dev = pick(&|i| in_dev[i]);
    let train = pick(&|i| !in_test[i] && !in_dev[i]);
    let report = SplitReport {
        seed: cfg.seed,
        train: train.len(),
        dev: dev.len(),
        test: test.len(),
        test_groups: eligible
            .iter()
            .zip(&picks)
            .map(|(((spk, acc), secs, _), &n)| GroupPick {
                speaker_id: spk.to_string(),
                accent: acc.to_string(),
                group_minutes: secs / 60.0,
                test_count: n,
            })
            .collect(),
    };
    Ok(Splits {
        train,
        dev,
        test,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub target_minutes_per_speaker: f64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            target_minutes_per_speaker: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerMultiplier {
    pub speaker_id: String,
    pub minutes: f64,
    /// Total copies of the speaker's set, original included.
    pub multiplier: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub target_minutes: f64,
    pub speakers: Vec<SpeakerMultiplier>,
}

/// Smallest `k ≥ 1` with `k·duration ≥ target`.
pub fn multiplier(duration_s: f64, target_s: f64) -> u32 {
    if duration_s >= target_s {
        return 1;
    }
    let mut k = (target_s / duration_s).ceil().max(1.0) as u32;
    while k > 1 && f64::from(k - 1) * duration_s >= target_s {
        k -= 1;
    }
    while f64::from(k) * duration_s < target_s {
        k += 1;
    }
    k
}

/// Repeats every short speaker's whole utterance set until it reaches the
/// target duration.
///
/// Originals are emitted first in input order, followed by replica pass 1,
/// pass 2, and so on. Replica `k` of utterance `u` gets id `u::r{k}` and a
/// [`Replica`] pointing back at `u`.
pub fn balance_duplicate(
    train: &Manifest,
    cfg: &BalanceConfig,
) -> Result<(Manifest, BalanceReport), SplitError> {
    let target = cfg.target_minutes_per_speaker;
    if !(target.is_finite() && target > 0.0) {
        return Err(SplitError::InvalidTarget(target));
    }
    let target_s = target * 60.0;
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for r in &train.records {
        *totals.entry(&r.speaker_id).or_default() += r.duration_s;
    }
    let mut mult: BTreeMap<&str, u32> = BTreeMap::new();
    for (&spk, &secs) in &totals {
        if secs <= 0.0 {
            return Err(SplitError::ZeroDuration(spk.to_string()));
        }
        mult.insert(spk, multiplier(secs, target_s));
    }

    let mut records = train.records.clone();
    let max_k = mult.values().copied().max().unwrap_or(1);
    for k in 1..max_k {
        for r in &train.records {
            if mult[r.speaker_id.as_str()] > k {
                records.push(replica_of(r, k));
            }
        }
    }
    let report = BalanceReport {
        target_minutes: target,
        speakers: totals
            .iter()
            .map(|(&spk, &secs)| SpeakerMultiplier {
                speaker_id: spk.to_string(),
                minutes: secs / 60.0,
                multiplier: mult[spk],
            })
            .collect(),
    };
    Ok((train.derive(records), report))
}

fn replica_of(r: &UtteranceRecord, k: u32) -> UtteranceRecord {
    let source = r
        .replica
        .as_ref()
        .map_or(r.utterance_id.as_str(), |rep| rep.source_id.as_str());
    UtteranceRecord {
        utterance_id: format!("{source}::r{k}"),
        replica: Some(Replica {
            source_id: source.to_string(),
            index: k,
        }),
        ..r.clone()
    }
}

/// Distinct source utterance ids per speaker, following replica lineage.
pub fn source_sets(m: &Manifest) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in &m.records {
        let src = r.replica.as_ref().map_or(&r.utterance_id, |rep| &rep.source_id);
        out.entry(r.speaker_id.clone()).or_default().insert(src.clone());
    }
    out
}
