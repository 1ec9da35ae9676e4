//! `afroforge`: corpus pipeline, evaluation metrics and rating service.

mod eval;
mod serve;
mod table;

use std::io::{BufRead, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use afroforge_core::corpus::synth::{write_synth_corpus, SynthSpec};
use afroforge_core::corpus::ManifestFormat;
use afroforge_core::enhance::MockKind;
use afroforge_core::enhance::MODE_ENV;
use afroforge_core::pipeline::{
    load_rules, InterpolateOptions, Pipeline, PipelineConfig, PipelineError, RunSummary, Stage, StageOutcome,
};
use afroforge_core::speaker::{InterpolationPolicy, PersonaSpec, DEFAULT_ALPHA, MAX_SOURCES};
use afroforge_core::textnorm::normalize_text;
use clap::{Args, Parser, Subcommand};
use log::error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Pipeline(PipelineError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) => f.write_str(m),
            CliError::Pipeline(e) => write!(f, "{e}"),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "afroforge", version, about = "Accented TTS corpus pipeline and evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate audio, write the cleaned manifest and corpus statistics.
    Ingest(StageArgs),
    /// Denoise, restore, score and keep the best candidate per utterance.
    Enhance(StageArgs),
    /// Loudness, pause trimming, resampling, eligibility and text normalization.
    Preprocess {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        dsp: DspArgs,
    },
    /// Train/dev/test split.
    Split {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Duplicate training utterances of under-represented speakers.
    Balance {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        balance: BalanceArgs,
    },
    /// Every stage in order: ingest, enhance, preprocess, split, balance.
    Run {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        dsp: DspArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        balance: BalanceArgs,
    },
    /// Normalize text: stdin to stdout, or the manifest transcripts with --config.
    NormalizeText {
        #[command(flatten)]
        stage: StageArgs,
    },
    /// Per-speaker embeddings from the registry's embedder.
    Embed(StageArgs),
    /// Blend speaker embeddings into new personas.
    Interpolate {
        #[command(flatten)]
        stage: StageArgs,
        #[command(flatten)]
        opts: InterpolateArgs,
    },
    /// Evaluation metrics.
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Rating service HTTP API.
    Serve(serve::ServeArgs),
    /// Built-in deterministic adapter: reads a WAV on stdin, writes the response on stdout.
    MockAdapter {
        /// identity, fir, flatness or embedder.
        kind: String,
        #[arg(long, env = MODE_ENV)]
        mode: Option<u8>,
    },
    /// Write a seeded synthetic corpus for trying the pipeline.
    SynthCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 5)]
        per_speaker: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Config file plus field overrides. Override paths are relative to the
/// working directory; config paths to the config file.
#[derive(Debug, Args)]
struct StageArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    manifest_format: Option<String>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct DspArgs {
    #[arg(long, allow_hyphen_values = true)]
    target_dbfs: Option<f64>,
    #[arg(long)]
    vad_aggr: Option<u8>,
    #[arg(long)]
    max_pause_ms: Option<u32>,
    /// Output sample rate; 0 keeps the input rate.
    #[arg(long)]
    resample: Option<u32>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    dev_size: Option<usize>,
    #[arg(long)]
    test_min_group_minutes: Option<f64>,
}

#[derive(Debug, Args)]
struct BalanceArgs {
    #[arg(long)]
    target_minutes: Option<f64>,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    /// Embedding file; defaults to the embed stage output.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Explicit persona `NEW_ID=S1+S2[+S3]`; repeatable. Without any,
    /// all within-group pairs and triples are generated.
    #[arg(long = "persona")]
    personas: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = MAX_SOURCES)]
    max_sources: usize,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    allow_cross_group: bool,
}

fn absolute(p: PathBuf) -> Result<PathBuf, CliError> {
    std::path::absolute(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

fn required<T>(v: Option<T>, field: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{field}: required (set it in --config or pass --{field})")))
}

impl StageArgs {
    fn has_config(&self) -> bool {
        self.config.is_some() || self.manifest.is_some()
    }

    fn load(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_json_file(path)?,
            None => {
                let v = serde_json::json!({
                    "manifest": required(self.manifest.clone(), "manifest")?,
                    "out_dir": required(self.out_dir.clone(), "out-dir")?,
                    "seed": required(self.seed, "seed")?,
                });
                serde_json::from_value(v).map_err(|e| CliError::Usage(e.to_string()))?
            }
        };
        if let Some(p) = &self.manifest {
            cfg.manifest = absolute(p.clone())?;
        }
        if let Some(f) = &self.manifest_format {
            cfg.manifest_format = Some(ManifestFormat::from_str(f).map_err(CliError::Usage)?);
        }
        if let Some(p) = &self.registry {
            cfg.registry = Some(absolute(p.clone())?);
        }
        if let Some(p) = &self.rules {
            cfg.rules = Some(absolute(p.clone())?);
        }
        if let Some(p) = &self.out_dir {
            cfg.out_dir = absolute(p.clone())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

impl DspArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.target_dbfs {
            cfg.dsp.target_dbfs = v;
        }
        if let Some(v) = self.vad_aggr {
            cfg.dsp.vad.aggressiveness = v;
        }
        if let Some(v) = self.max_pause_ms {
            cfg.dsp.vad.max_pause_ms = v;
        }
        if let Some(v) = self.resample {
            cfg.dsp.resample_hz = (v != 0).then_some(v);
        }
    }
}

impl SplitArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.test_size {
            cfg.split.test_size = v;
        }
        if let Some(v) = self.dev_size {
            cfg.split.dev_size = v;
        }
        if let Some(v) = self.test_min_group_minutes {
            cfg.split.test_min_group_minutes = v;
        }
    }
}

impl BalanceArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.target_minutes {
            cfg.balance.target_minutes_per_speaker = v;
        }
    }
}

impl InterpolateArgs {
    fn options(&self) -> Result<InterpolateOptions, CliError> {
        let personas = self
            .personas
            .iter()
            .map(|p| parse_persona(p, self.alpha))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InterpolateOptions {
            embeddings: self.embeddings.clone().map(absolute).transpose()?,
            personas,
            alpha: self.alpha,
            max_sources: self.max_sources,
            cap: self.cap,
            policy: InterpolationPolicy {
                allow_cross_group: self.allow_cross_group,
            },
        })
    }
}

/// `NEW=A+B` blends with `alpha`; `NEW=A+B+C` with equal weights.
fn parse_persona(s: &str, alpha: f64) -> Result<PersonaSpec, CliError> {
    let bad = || CliError::Usage(format!("--persona '{s}': expected NEW_ID=S1+S2[+S3]"));
    let (id, sources) = s.split_once('=').ok_or_else(bad)?;
    let sources: Vec<&str> = sources.split('+').map(str::trim).collect();
    match sources.as_slice() {
        [a, b] => Ok(PersonaSpec::pair(id.trim(), a, b, alpha)),
        [_, _, _] => Ok(PersonaSpec {
            new_speaker_id: id.trim().to_string(),
            sources: sources.iter().map(|x| x.to_string()).collect(),
            weights: vec![1.0 / 3.0; 3],
        }),
        _ => Err(bad()),
    }
}

fn report(outcomes: &[StageOutcome]) -> ExitCode {
    for o in outcomes {
        eprintln!(
            "{}: {} in, {} out, {} failed",
            o.stage,
            o.records_in,
            o.records_out,
            o.failures.len()
        );
        for f in &o.failures {
            eprintln!("  {}: {}", f.utterance_id, f.message);
        }
    }
    let failed = RunSummary {
        outcomes: outcomes.to_vec(),
    }
    .failure_count();
    if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_stage(args: &StageArgs, stage: Stage, tweak: impl FnOnce(&mut PipelineConfig)) -> Result<ExitCode, CliError> {
    let mut cfg = args.load()?;
    tweak(&mut cfg);
    let outcome = Pipeline::new(cfg)?.run_stage(stage)?;
    Ok(report(&[outcome]))
}

fn normalize_stream(args: &StageArgs) -> Result<ExitCode, CliError> {
    let rules = load_rules(args.rules.as_deref())?;
    let stdin = std::io::stdin();
    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
    let mut line = String::new();
    let mut reader = stdin.lock();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| CliError::Input(e.to_string()))? == 0 {
            break;
        }
        let body = line.strip_suffix('\n').unwrap_or(&line);
        let body = body.strip_suffix('\r').unwrap_or(body);
        writeln!(out, "{}", normalize_text(body, &rules)).map_err(|e| CliError::Input(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}

fn mock_adapter(kind: &str, mode: Option<u8>) -> Result<ExitCode, CliError> {
    let kind = MockKind::from_str(kind).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut input = Vec::new();
    std::io::stdin()
        .read_to_end(&mut input)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let output = kind.run(&input, mode).map_err(|e| CliError::Input(e.to_string()))?;
    std::io::stdout()
        .write_all(&output)
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Ingest(a) => run_stage(&a, Stage::Ingest, |_| {}),
        Command::Enhance(a) => run_stage(&a, Stage::Enhance, |_| {}),
        Command::Preprocess { stage, dsp } => run_stage(&stage, Stage::Preprocess, |c| dsp.apply(c)),
        Command::Split { stage, split } => run_stage(&stage, Stage::Split, |c| split.apply(c)),
        Command::Balance { stage, balance } => run_stage(&stage, Stage::Balance, |c| balance.apply(c)),
        Command::Run {
            stage,
            dsp,
            split,
            balance,
        } => {
            let mut cfg = stage.load()?;
            dsp.apply(&mut cfg);
            split.apply(&mut cfg);
            balance.apply(&mut cfg);
            let summary = Pipeline::new(cfg)?.run_all()?;
            Ok(report(&summary.outcomes))
        }
        Command::NormalizeText { stage } if stage.has_config() => run_stage(&stage, Stage::NormalizeText, |_| {}),
        Command::NormalizeText { stage } => normalize_stream(&stage),
        Command::Embed(a) => run_stage(&a, Stage::Embed, |_| {}),
        Command::Interpolate { stage, opts } => {
            let options = opts.options()?;
            let outcome = Pipeline::new(stage.load()?)?.interpolate(&options)?;
            Ok(report(&[outcome]))
        }
        Command::Eval(cmd) => eval::run(cmd).map(|_| ExitCode::SUCCESS),
        Command::Serve(args) => serve::run(args).map(|_| ExitCode::SUCCESS),
        Command::MockAdapter { kind, mode } => mock_adapter(&kind, mode),
        Command::SynthCorpus {
            out_dir,
            speakers,
            per_speaker,
            seed,
        } => {
            let m = write_synth_corpus(&out_dir, &SynthSpec::uniform(speakers, per_speaker, seed))
                .map_err(|e| CliError::Input(e.to_string()))?;
            eprintln!("wrote {} utterances to {}", m.len(), out_dir.join("manifest.jsonl").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
