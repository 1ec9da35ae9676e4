//! Objective evaluation metrics: WER, EER, MOS summaries, bootstrap
//! significance and preference leaderboards.

mod bootstrap;
mod eer;
mod mos;
mod preference;
mod wer;

use thiserror::Error;

pub use bootstrap::{bootstrap_diff, BootstrapResult, DEFAULT_RESAMPLES};
pub use eer::{eer, ScoreTrials};
pub use mos::{aggregate_mos, MosSummary};
pub use preference::{preference_ranking, LeaderboardEntry};
pub use wer::{align_words, wer, wer_default, wer_normalize, WerBreakdown};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference is empty after normalization")]
    EmptyReference,
    #[error("no ratings to aggregate")]
    NoRatings,
    #[error("rating {0} outside the 1-5 Likert range")]
    RatingOutOfRange(i64),
    #[error("{0} trial list is empty")]
    EmptyTrials(&'static str),
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("bootstrap needs non-empty samples and at least 1000 resamples")]
    BootstrapInput,
}
