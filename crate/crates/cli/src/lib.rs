//! `softsql`: generate, analyse and evaluate text-to-SQL benchmark datasets.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 partial result
//! with warnings, 3 provider failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;

pub use config::{AppConfig, NamedProvider};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Failed(_) => EXIT_USAGE,
            CliError::Provider(_) => EXIT_PROVIDER,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "softsql", version, about = "Text-to-SQL benchmark generation and evaluation")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed (datagen sampling, fallback embeddings).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a question/SQL/answer dataset with the generation provider.
    Generate(GenerateArgs),
    /// Label SQL difficulty and summarise construct usage.
    Classify(InputArgs),
    /// Exact-match and embedding-similarity summaries per field.
    Diversity(InputArgs),
    /// Evaluate one configured provider on the dataset.
    Evaluate(EvaluateArgs),
    /// Render reports from evaluation record files.
    Report(ReportArgs),
    /// Re-execute every ground-truth query of a dataset.
    Validate(InputArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Overrides `datagen.target_size`.
    #[arg(long)]
    pub target: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// JSONL input; defaults to the configured dataset.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Zero,
    Few,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Name of an entry in `evaluation_providers`.
    #[arg(long)]
    pub model: String,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Dataset to evaluate; defaults to the configured dataset.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Discard an existing checkpoint instead of resuming from it.
    #[arg(long)]
    pub fresh: bool,
    /// Plain means instead of grouping by ground-truth SQL first.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    #[value(alias = "md")]
    Markdown,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation record files (JSONL); runs are split by model and mode.
    #[arg(long = "in", value_name = "PATH", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: FormatArg,
    #[arg(long)]
    pub raw: bool,
}

fn init_logging() {
    let filter =
        tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    // A second call (tests run several commands per process) is harmless.
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr, results to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging();
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
