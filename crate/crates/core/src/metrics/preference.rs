use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub model: String,
    pub wins: u64,
    /// Competition ranking: tied models share a rank and the next rank skips.
    pub rank: usize,
}

impl LeaderboardEntry {
    /// "1st", "2nd", ...
    pub fn rank_label(&self) -> String {
        let suffix = match (self.rank % 10, self.rank % 100) {
            (_, 11..=13) => "th",
            (1, _) => "st",
            (2, _) => "nd",
            (3, _) => "rd",
            _ => "th",
        };
        format!("{}{}", self.rank, suffix)
    }
}

/// Sorts by descending win count; ties are listed by model name.
pub fn preference_ranking(votes: &BTreeMap<String, u64>) -> Vec<LeaderboardEntry> {
    let mut entries: Vec<(&String, u64)> = votes.iter().map(|(m, &w)| (m, w)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out: Vec<LeaderboardEntry> = Vec::with_capacity(entries.len());
    for (pos, (model, wins)) in entries.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if prev.wins == wins => prev.rank,
            _ => pos + 1,
        };
        out.push(LeaderboardEntry {
            model: model.clone(),
            wins,
            rank,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn votes(v: &[(&str, u64)]) -> BTreeMap<String, u64> {
        v.iter().map(|(m, w)| (m.to_string(), *w)).collect()
    }

    #[test]
    fn reported_preference_order() {
        let board = preference_ranking(&votes(&[("VITS-EXT", 1168), ("XTTS-FT", 1235), ("VITS-FT", 1192)]));
        let got: Vec<_> = board.iter().map(|e| (e.model.as_str(), e.wins, e.rank_label())).collect();
        assert_eq!(
            got,
            vec![
                ("XTTS-FT", 1235, "1st".to_string()),
                ("VITS-FT", 1192, "2nd".to_string()),
                ("VITS-EXT", 1168, "3rd".to_string()),
            ]
        );
    }

    #[test]
    fn ties_share_rank() {
        let board = preference_ranking(&votes(&[("A", 10), ("B", 10), ("C", 3)]));
        let ranks: Vec<_> = board.iter().map(|e| e.rank).collect();
        assert_eq!(ranks, vec![1, 1, 3]);
        assert!(preference_ranking(&BTreeMap::new()).is_empty());
    }

    #[test]
    fn rank_labels() {
        let label = |rank| LeaderboardEntry { model: String::new(), wins: 0, rank }.rank_label();
        assert_eq!(label(11), "11th");
        assert_eq!(label(21), "21st");
        assert_eq!(label(112), "112th");
    }
}
