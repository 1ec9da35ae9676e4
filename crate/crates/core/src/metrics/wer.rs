use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
    pub wer: f64,
}

impl WerBreakdown {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Lowercases, strips punctuation and collapses whitespace.
pub fn wer_normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy)]
enum Step {
    Match,
    Sub,
    Del,
    Ins,
}

/// Minimum-edit word alignment with unit costs. Returns (S, D, I).
/// Among equal-cost alignments, matches/substitutions are preferred, then
/// deletions, then insertions.
pub fn align_words(reference: &[&str], hypothesis: &[&str]) -> (usize, usize, usize) {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        cost[i * w] = i;
    }
    for (j, c) in cost.iter_mut().take(m + 1).enumerate() {
        *c = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[(i - 1) * w + j] + 1;
            let ins = cost[i * w + j - 1] + 1;
            cost[i * w + j] = diag.min(del).min(ins);
        }
    }
    let (mut i, mut j) = (n, m);
    let (mut s, mut d, mut ins) = (0, 0, 0);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        let step = if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == cost[(i - 1) * w + j - 1] + usize::from(!same) {
                if same {
                    Step::Match
                } else {
                    Step::Sub
                }
            } else if here == cost[(i - 1) * w + j] + 1 {
                Step::Del
            } else {
                Step::Ins
            }
        } else if i > 0 {
            Step::Del
        } else {
            Step::Ins
        };
        match step {
            Step::Match => {
                i -= 1;
                j -= 1;
            }
            Step::Sub => {
                s += 1;
                i -= 1;
                j -= 1;
            }
            Step::Del => {
                d += 1;
                i -= 1;
            }
            Step::Ins => {
                ins += 1;
                j -= 1;
            }
        }
    }
    (s, d, ins)
}

/// Word error rate after applying `norm` to both sides and splitting on whitespace.
pub fn wer<F>(reference: &str, hypothesis: &str, norm: F) -> Result<WerBreakdown, MetricError>
where
    F: Fn(&str) -> String,
{
    let r = norm(reference);
    let h = norm(hypothesis);
    let ref_words: Vec<&str> = r.split_whitespace().collect();
    let hyp_words: Vec<&str> = h.split_whitespace().collect();
    if ref_words.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let (substitutions, deletions, insertions) = align_words(&ref_words, &hyp_words);
    Ok(WerBreakdown {
        substitutions,
        deletions,
        insertions,
        ref_words: ref_words.len(),
        wer: (substitutions + deletions + insertions) as f64 / ref_words.len() as f64,
    })
}

/// [`wer`] with [`wer_normalize`].
pub fn wer_default(reference: &str, hypothesis: &str) -> Result<WerBreakdown, MetricError> {
    wer(reference, hypothesis, wer_normalize)
}
