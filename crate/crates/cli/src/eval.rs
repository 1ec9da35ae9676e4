use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use afroforge_core::metrics::{
    bootstrap_diff, eer, preference_ranking, wer_default, MosSummary, ScoreTrials, DEFAULT_RESAMPLES,
};
use afroforge_core::service::{mos_table, Dimension, GroupKey, RatingRow};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use crate::table;
use crate::CliError;

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Word error rate of hypotheses against references.
    Wer {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Equal error rate of verification trials.
    Eer {
        #[arg(long)]
        trials: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// MOS with 95 % intervals per group and dimension.
    Mos {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value = "model")]
        group_by: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Leaderboard from preference win counts.
    Preference {
        /// JSON object mapping model name to wins.
        #[arg(long)]
        votes: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Bootstrap confidence interval for a difference of means.
    Bootstrap {
        /// JSON array of per-item scores for system A.
        #[arg(long)]
        a: PathBuf,
        /// JSON array of per-item scores for system B.
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Print JSON instead of a text table.
    #[arg(long)]
    json: bool,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn emit<T: Serialize>(out: &OutputArgs, value: &T, text: String) {
    if out.json {
        println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    } else {
        print!("{text}");
    }
}

fn metric_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Deserialize)]
struct TextRow {
    utterance_id: String,
    text: String,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Debug, Serialize)]
struct WerRow {
    model: String,
    utterances: usize,
    ref_words: usize,
    substitutions: usize,
    deletions: usize,
    insertions: usize,
    wer_percent: f64,
}

fn wer_report(refs: &[TextRow], hyps: &[TextRow]) -> Result<Vec<WerRow>, CliError> {
    let by_id: BTreeMap<&str, &str> = refs.iter().map(|r| (r.utterance_id.as_str(), r.text.as_str())).collect();
    let mut acc: BTreeMap<String, WerRow> = BTreeMap::new();
    for h in hyps {
        let reference = by_id
            .get(h.utterance_id.as_str())
            .ok_or_else(|| CliError::Input(format!("hypothesis '{}' has no reference", h.utterance_id)))?;
        let b = wer_default(reference, &h.text).map_err(|e| CliError::Input(format!("{}: {e}", h.utterance_id)))?;
        let model = h.model.clone().unwrap_or_else(|| "-".into());
        let row = acc.entry(model.clone()).or_insert_with(|| WerRow {
            model,
            utterances: 0,
            ref_words: 0,
            substitutions: 0,
            deletions: 0,
            insertions: 0,
            wer_percent: 0.0,
        });
        row.utterances += 1;
        row.ref_words += b.ref_words;
        row.substitutions += b.substitutions;
        row.deletions += b.deletions;
        row.insertions += b.insertions;
    }
    let mut rows: Vec<WerRow> = acc.into_values().collect();
    for r in rows.iter_mut() {
        r.wer_percent = 100.0 * (r.substitutions + r.deletions + r.insertions) as f64 / r.ref_words as f64;
    }
    Ok(rows)
}

fn mos_cell(s: &MosSummary) -> String {
    format!("{:.2}±{:.2}", s.mean, s.ci95_half_width)
}

fn dimension_name(d: Dimension) -> String {
    serde_json::to_value(d).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn run(cmd: EvalCommand) -> Result<(), CliError> {
    match cmd {
        EvalCommand::Wer { refs, hyps, out } => {
            let rows = wer_report(&read_jsonl(&refs)?, &read_jsonl(&hyps)?)?;
            let text = table::render(
                &["Model", "N", "S", "D", "I", "% WER"].map(String::from),
                &rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.model.clone(),
                            r.utterances.to_string(),
                            r.substitutions.to_string(),
                            r.deletions.to_string(),
                            r.insertions.to_string(),
                            format!("{:.2}", r.wer_percent),
                        ]
                    })
                    .collect::<Vec<_>>(),
            );
            emit(&out, &rows, text);
        }
        EvalCommand::Eer { trials, out } => {
            let t: ScoreTrials = read_json(&trials)?;
            let value = eer(&t).map_err(metric_err)?;
            let report = serde_json::json!({
                "genuine": t.genuine.len(),
                "impostor": t.impostor.len(),
                "eer": value,
                "eer_percent": 100.0 * value,
            });
            emit(&out, &report, format!("%EER {:.2}\n", 100.0 * value));
        }
        EvalCommand::Mos { ratings, group_by, out } => {
            let keys = GroupKey::parse_list(&group_by).map_err(CliError::Usage)?;
            let rows: Vec<RatingRow> = read_jsonl(&ratings)?;
            let mos = mos_table(&rows, &keys).map_err(metric_err)?;
            let dims: Vec<Dimension> = {
                let mut d: Vec<Dimension> = mos.iter().map(|r| r.dimension).collect();
                d.sort();
                d.dedup();
                d
            };
            let mut grid: BTreeMap<&BTreeMap<String, String>, BTreeMap<Dimension, String>> = BTreeMap::new();
            for r in &mos {
                grid.entry(&r.group).or_default().insert(r.dimension, mos_cell(&r.summary));
            }
            let mut headers: Vec<String> = keys.iter().map(|k| k.name().to_string()).collect();
            headers.extend(dims.iter().map(|&d| dimension_name(d)));
            let body: Vec<Vec<String>> = grid
                .into_iter()
                .map(|(g, cells)| {
                    let mut row: Vec<String> = keys.iter().map(|k| g[k.name()].clone()).collect();
                    row.extend(dims.iter().map(|d| cells.get(d).cloned().unwrap_or_else(|| "-".into())));
                    row
                })
                .collect();
            emit(&out, &mos, table::render(&headers, &body));
        }
        EvalCommand::Preference { votes, out } => {
            let tally: BTreeMap<String, u64> = read_json(&votes)?;
            let board = preference_ranking(&tally);
            let text = table::render(
                &["Model", "Ranking"].map(String::from),
                &board
                    .iter()
                    .map(|e| vec![e.model.clone(), format!("({}) {}", e.wins, e.rank_label())])
                    .collect::<Vec<_>>(),
            );
            emit(&out, &board, text);
        }
        EvalCommand::Bootstrap { a, b, resamples, seed, out } => {
            let xs: Vec<f64> = read_json(&a)?;
            let ys: Vec<f64> = read_json(&b)?;
            let r = bootstrap_diff(&xs, &ys, resamples, seed).map_err(metric_err)?;
            let text = format!(
                "mean diff {:.4}  95% CI [{:.4}, {:.4}]  {}\n",
                r.mean_diff,
                r.ci95.0,
                r.ci95.1,
                if r.significant { "significant" } else { "not significant" }
            );
            emit(&out, &r, text);
        }
    }
    Ok(())
}
