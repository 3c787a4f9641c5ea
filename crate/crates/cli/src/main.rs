mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

/// Exit status 1: bad flags or arguments.
const EXIT_USAGE: u8 = 1;
/// Exit status 2: the command failed while running.
const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn prefix(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "error[usage]",
            CliError::Runtime(_) => "error[runtime]",
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Attach what was being done to a runtime failure.
pub trait Context<T> {
    fn ctx(self, what: impl std::fmt::Display) -> Result<T, CliError>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn ctx(self, what: impl std::fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(format!("{what}: {e}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "eventinfo", version, about = "Context-aware information of clinical event timelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse long-format event tables into a cohort JSONL file.
    Ingest(IngestArgs),
    /// Fit decile cutoffs from a cohort, or export the preset ones.
    FitCutoffs(FitCutoffsArgs),
    /// Encode a cohort into integer timelines.
    Tokenize(TokenizeArgs),
    /// Train a back-off model, or record an external model endpoint.
    Train(TrainArgs),
    /// Score tokens and events in bits.
    Score(ScoreArgs),
    /// Render one scored timeline with tokens colored by their bits.
    Highlight(HighlightArgs),
    /// Run the redaction grid and write the results table.
    RedactGrid(RedactGridArgs),
    /// Generate a seeded synthetic cohort.
    Synth(SynthArgs),
    /// Mean bits, percentile thresholds and count features of a scored file.
    InfoStats(InfoStatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TableFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Table files; the table kind is read from each row or file name.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: TableFormat,
    #[arg(long, default_value_t = 24.0)]
    pub min_stay_hours: f64,
    /// Drop stays shorter than --min-stay-hours.
    #[arg(long)]
    pub drop_short: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Paper,
}

#[derive(Debug, Args)]
pub struct FitCutoffsArgs {
    /// Cohort JSONL to fit from.
    #[arg(long = "in", required_unless_present = "preset")]
    pub input: Option<PathBuf>,
    /// Export the reference cutoffs instead of fitting.
    #[arg(long, value_enum, conflicts_with = "input")]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the matching vocabulary file.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// Cutoff CSV; the preset table when omitted.
    #[arg(long)]
    pub cutoffs: Option<PathBuf>,
    /// Vocabulary file; the preset vocabulary when omitted.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = eventinfo::tokenizer::DEFAULT_CONTEXT_LIMIT)]
    pub context_limit: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, required_unless_present = "external")]
    pub timelines: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.75)]
    pub discount: f64,
    /// `host:port` or `cmd:program args` of an external provider.
    #[arg(long, conflicts_with = "timelines")]
    pub external: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Model source shared by scoring commands.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelSource {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Generator config whose exact conditionals serve as the model.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Clinical,
    Raw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ContextArg {
    Confined,
    Packed,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub timelines: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only the prefix and the events of the first H hours.
    #[arg(long)]
    pub first_hours: Option<f64>,
    #[arg(long, value_enum, default_value = "clinical")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "confined")]
    pub context: ContextArg,
    /// Flag tokens and events: a thresholds JSON file, or `fit` to fit them
    /// on this cohort.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Window for fitted thresholds, in hours.
    #[arg(long, default_value_t = eventinfo::infomeasure::DEFAULT_WINDOW_HOURS)]
    pub window_hours: f64,
    /// Write the thresholds used.
    #[arg(long, requires = "thresholds")]
    pub thresholds_out: Option<PathBuf>,
    /// Attach representation deltas.
    #[arg(long)]
    pub deltas: bool,
    /// Display cap for infinite scores, in bits.
    #[arg(long, default_value_t = eventinfo::infomeasure::DEFAULT_DISPLAY_CAP)]
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Ansi,
    Svg,
}

#[derive(Debug, Args)]
pub struct HighlightArgs {
    #[arg(long)]
    pub scored: PathBuf,
    #[arg(long)]
    pub id: String,
    #[arg(long, default_value_t = eventinfo::report::DEFAULT_FIRST_N)]
    pub first_n: usize,
    #[arg(long, value_enum, default_value = "ansi")]
    pub format: ReportFormat,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RedactGridArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub cutoffs: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "mortality,long_los")]
    pub outcomes: Vec<String>,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 10_000)]
    pub boot: usize,
    /// Seed of the split, the random redaction and the bootstrap.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "last")]
    pub pooling: String,
    /// L2 penalty of the logistic head.
    #[arg(long, default_value_t = eventinfo::experiments::DEFAULT_HEAD_L2)]
    pub l2: f64,
    /// Analyze every stay instead of those reaching the ICU within 24 hours.
    #[arg(long)]
    pub no_icu_filter: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the markdown tables.
    #[arg(long)]
    pub markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML generator config; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_patients: Option<usize>,
    /// Remove planted events, missing values and every outcome link.
    #[arg(long)]
    pub null: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth list of planted events.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoStatsArgs {
    #[arg(long)]
    pub scored: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Thresholds JSON; fitted on the scored cohort when omitted.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, default_value_t = eventinfo::infomeasure::DEFAULT_WINDOW_HOURS)]
    pub window_hours: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::FitCutoffs(a) => commands::fit_cutoffs(a),
        Command::Tokenize(a) => commands::tokenize(a),
        Command::Train(a) => commands::train(a),
        Command::Score(a) => commands::score(a),
        Command::Highlight(a) => commands::highlight(a),
        Command::RedactGrid(a) => commands::redact_grid(a),
        Command::Synth(a) => commands::synth(a),
        Command::InfoStats(a) => commands::info_stats(a),
    }
}

fn one_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            _ => {
                let text = e.to_string();
                let body = text
                    .lines()
                    .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ");
                eprintln!("error[usage]: {}", body.trim_start_matches("error: "));
                return ExitCode::from(EXIT_USAGE);
            }
        },
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.prefix(), one_line(&e.to_string()));
            ExitCode::from(e.code())
        }
    }
}
