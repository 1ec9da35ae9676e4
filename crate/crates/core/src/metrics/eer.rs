use serde::{Deserialize, Serialize};

use super::MetricError;

/// Verification scores: higher means "same speaker".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreTrials {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreTrials {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.genuine.is_empty() {
            return Err(MetricError::EmptyTrials("genuine"));
        }
        if self.impostor.is_empty() {
            return Err(MetricError::EmptyTrials("impostor"));
        }
        if let Some(&bad) = self.genuine.iter().chain(&self.impostor).find(|s| !s.is_finite()) {
            return Err(MetricError::NonFiniteScore(bad));
        }
        Ok(())
    }
}

/// Equal error rate.
///
/// Thresholds sit below the lowest score, at midpoints between consecutive
/// distinct scores, and above the highest score; a trial is accepted when its
/// score exceeds the threshold. Walking thresholds upward, false accepts fall
/// and false rejects rise; the EER is their common value where they meet,
/// linearly interpolated between the two operating points that bracket the
/// crossing.
pub fn eer(t: &ScoreTrials) -> Result<f64, MetricError> {
    t.validate()?;
    let ng = t.genuine.len() as f64;
    let ni = t.impostor.len() as f64;

    // (score, is_genuine), sorted ascending
    let mut scores: Vec<(f64, bool)> = t
        .genuine
        .iter()
        .map(|&s| (s, true))
        .chain(t.impostor.iter().map(|&s| (s, false)))
        .collect();
    scores.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Operating point below every score: everything accepted.
    let mut rejected_genuine = 0usize;
    let mut rejected_impostor = 0usize;
    let mut prev = (1.0, 0.0); // (far, frr)
    if prev.0 == prev.1 {
        return Ok(prev.0);
    }
    let mut i = 0;
    while i < scores.len() {
        // Move the threshold past every trial tied at this score.
        let s = scores[i].0;
        while i < scores.len() && scores[i].0 == s {
            if scores[i].1 {
                rejected_genuine += 1;
            } else {
                rejected_impostor += 1;
            }
            i += 1;
        }
        let far = (ni - rejected_impostor as f64) / ni;
        let frr = rejected_genuine as f64 / ng;
        let d_prev = prev.0 - prev.1;
        let d = far - frr;
        if d == 0.0 {
            return Ok(far);
        }
        if d < 0.0 {
            let lambda = d_prev / (d_prev - d);
            return Ok(prev.0 + lambda * (far - prev.0));
        }
        prev = (far, frr);
    }
    // The last operating point rejects everything: far 0, frr 1, so the loop
    // always returns before reaching here.
    unreachable!("far - frr changes sign by the final threshold")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials(g: &[f64], i: &[f64]) -> ScoreTrials {
        ScoreTrials {
            genuine: g.to_vec(),
            impostor: i.to_vec(),
        }
    }

    #[test]
    fn examples() {
        assert_eq!(eer(&trials(&[0.9, 0.8], &[0.2, 0.1])).unwrap(), 0.0);
        assert_eq!(eer(&trials(&[0.9, 0.4], &[0.6, 0.1])).unwrap(), 0.5);
        assert_eq!(eer(&trials(&[0.1, 0.2], &[0.8, 0.9])).unwrap(), 1.0);
    }

    #[test]
    fn interpolates_between_operating_points() {
        // Operating points (far, frr): (1, 0), (2/3, 0), (2/3, 1/2), (1/3, 1/2), ...
        // d goes from 1/6 at (2/3, 1/2) to -1/6 at (1/3, 1/2): halfway, far = 1/2.
        let e = eer(&trials(&[0.5, 0.95], &[0.1, 0.7, 0.9])).unwrap();
        assert!((e - 0.5).abs() < 1e-12, "{e}");
    }

    #[test]
    fn all_scores_tied() {
        let e = eer(&trials(&[0.5, 0.5], &[0.5])).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(eer(&trials(&[], &[0.1])).unwrap_err(), MetricError::EmptyTrials("genuine"));
        assert_eq!(eer(&trials(&[0.1], &[])).unwrap_err(), MetricError::EmptyTrials("impostor"));
        assert!(matches!(
            eer(&trials(&[f64::NAN], &[0.1])).unwrap_err(),
            MetricError::NonFiniteScore(_)
        ));
    }
}
