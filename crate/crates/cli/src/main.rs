//! `citebirth` command-line pipeline: simulate, fit, cluster, predict,
//! enrich, agedist, report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "citebirth", version, about = "Citation-history modelling pipeline")]
struct Cli {
    /// TOML file whose keys mirror the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus
    Simulate(SimulateArgs),
    /// Fit every paper of a corpus
    Fit(FitArgs),
    /// Cluster a fit table
    Cluster(ClusterArgs),
    /// Score classification from truncated histories
    Predict(PredictArgs),
    /// Journal enrichment per cluster
    Enrich(EnrichArgs),
    /// Distribution of fitted r per age group
    Agedist(AgedistArgs),
    /// Summary of all artifacts
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Calendar date at which observation stops
    #[arg(long)]
    corpus_end: Option<f64>,
    /// Cap on each paper's observation window, years
    #[arg(long)]
    horizon: Option<f64>,
    /// Corpus file format: jsonl or csv
    #[arg(long)]
    format: Option<String>,
    /// Keep papers cited before publication, dropping those citations
    #[arg(long)]
    keep_prepublished: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for every random draw
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus_end: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Output format: jsonl or csv
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Corpus file
    #[arg(long)]
    input: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Write the exclusion report as JSON here
    #[arg(long)]
    exclusions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Fit table
    #[arg(long)]
    input: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    /// DBSCAN radius in feature space
    #[arg(long)]
    eps: Option<f64>,
    /// DBSCAN core threshold, self-inclusive
    #[arg(long)]
    min_pts: Option<usize>,
    /// Feature transform: log10 or identity
    #[arg(long)]
    transform: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Corpus file
    #[arg(long)]
    input: PathBuf,
    /// Fit table from `fit`
    #[arg(long)]
    fits: PathBuf,
    /// Cluster table from `cluster`
    #[arg(long)]
    clusters: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Comma-separated training lengths in years
    #[arg(long)]
    train_grid: Option<String>,
    /// Minimum paper age for evaluation, years
    #[arg(long)]
    min_age: Option<f64>,
    /// Score this label against the rest instead of the three-way task
    #[arg(long)]
    positive: Option<String>,
}

#[derive(Debug, Args)]
pub struct EnrichArgs {
    /// Fit table from `fit`
    #[arg(long)]
    fits: PathBuf,
    /// Cluster table from `cluster`
    #[arg(long)]
    clusters: PathBuf,
    /// Journal-by-category counts and p-values
    #[arg(long)]
    output: Option<PathBuf>,
    /// Long-format enrichment and log-enrichment table
    #[arg(long)]
    log_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgedistArgs {
    /// Corpus file, for publication dates
    #[arg(long)]
    input: PathBuf,
    /// Fit table from `fit`
    #[arg(long)]
    fits: PathBuf,
    /// Output file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Number of log10 r histogram intervals
    #[arg(long)]
    intervals: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Fit table from `fit`
    #[arg(long)]
    fits: PathBuf,
    /// Cluster table from `cluster`
    #[arg(long)]
    clusters: PathBuf,
    /// Three-way prediction curve
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Output file (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing or unreadable inputs.
    Usage(String),
    /// Valid inputs, failed computation.
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    fn report(&self) -> ExitCode {
        let (kind, message, code) = match self {
            CliError::Usage(m) => ("usage", m, 2),
            CliError::Runtime(m) => ("runtime", m, 1),
        };
        let json = serde_json::json!({ "error": { "kind": kind, "message": message } });
        eprintln!("{json}");
        ExitCode::from(code)
    }
}

impl From<citebirth::Error> for CliError {
    fn from(e: citebirth::Error) -> Self {
        use citebirth::Error as E;
        match e {
            E::Io(_) | E::Csv(_) | E::Json(_) | E::Parse { .. } | E::TooManyMalformed { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return CliError::usage(e.to_string().trim().to_string()).report(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    if let Some(w) = cli.workers.or(file.workers) {
        if w == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &file),
        Command::Fit(a) => commands::fit(a, &file),
        Command::Cluster(a) => commands::cluster(a, &file),
        Command::Predict(a) => commands::predict(a, &file),
        Command::Enrich(a) => commands::enrich(a, &file),
        Command::Agedist(a) => commands::agedist(a, &file),
        Command::Report(a) => commands::report(a, &file),
    }
}
